use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNotConverged { sweeps: usize, off_norm: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}); the hard case is unsupported")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("diagonal block {block} is not positive definite")]
    BlockNotPositiveDefinite { block: usize },

    #[error("diagonal block {block} has smallest eigenvalue {min_eigenvalue:e}; increase rho or the number of samples")]
    InsufficientRegularization { block: usize, min_eigenvalue: f64 },

    #[error("multiplier {lambda} is at or beyond the pole at {pole}")]
    Pole { lambda: f64, pole: f64 },

    #[error("secular iteration limit reached (lambda {lambda:e}, norm residual {residual:e})")]
    IterationLimit { lambda: f64, residual: f64 },

    #[error("fixed block {block} has norm {norm} > 1")]
    FixedBlockInfeasible { block: usize, norm: f64 },

    #[error("curve parameter {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    DerivativeOrder { order: usize, max: usize },

    #[error("collision point coincides with the ellipsoid center")]
    DegenerateCollisionPoint,

    #[error("corridor axis {axis} is non-positive ({value:e}) at eps = {eps}")]
    NonPositiveAxis { axis: usize, eps: f64, value: f64 },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("simplex iteration limit reached")]
    LpIterationLimit,

    #[error("configuration is not reachable from the unit ball (minimum-norm parameter has norm {norm})")]
    InfeasibleConfiguration { norm: f64 },
}
