//! Trajectory optimization inside time-varying ellipsoidal corridors.
//!
//! Trajectories are parameterized as points in a Cartesian product of unit
//! balls. Every such point maps to a path that stays inside the corridor for
//! all ε ∈ [0, 1], so the optimization reduces to a quadratic program with one
//! ball constraint per block (an "orthogonal trust region problem"), solved
//! here by Gauss–Seidel block coordinate descent with per-block trust-region
//! steps.
//!
//! Module map:
//!
//! * [`eigen`], [`trp`]: dense symmetric eigensolver and the classical
//!   trust-region subproblem (optimal curve, secular equation, single dual step).
//! * [`orth`]: the block-separable solver.
//! * [`bezier`], [`simplex`], [`corridor`]: reference curves, the ellipsoid
//!   fitting LP and the interpolated corridor.
//! * [`lifting`]: the map from the product of balls into the corridor.
//! * [`objective`]: sampled derivative costs assembled into block quadratics.

pub mod bezier;
pub mod corridor;
pub mod eigen;
mod error;
pub mod lifting;
pub mod objective;
pub mod orth;
pub mod simplex;
pub mod trp;

mod serde_vec;

pub use error::{Error, Result};

pub use bezier::{bernstein, bernstein_derivative, fit_reference, BezierCurve, ReferenceFit};
pub use corridor::{contains, fit_ellipsoid, interpolate_corridor, CorridorSample, CorridorSpec, Ellipsoid, Knot};
pub use eigen::{eig_decompose, EigenFactorization};
pub use lifting::{
    block_basis, feasible_radius, lifted_map, proj_basis, proj_matrix, traj_eval, LiftConfig, LiftedMap,
    ParamPoint,
};
pub use objective::{average_acceleration, build_quadratic, objective_value, CostSpec, QuadraticModel, SampledCost};
pub use orth::{
    assemble_dense, block_offset, kkt_residual, precompute_factorizations, solve, sweep, BlockFactors, BlockMode,
    ConvergenceReport, ConvergenceStatus, DenseQp, OrthTrpProblem, OrthTrpState, SolverConfig,
};
pub use trp::{curve_norm_sq, curve_point, trp_solve, trp_step, TrpProblem, TrpSolution};
