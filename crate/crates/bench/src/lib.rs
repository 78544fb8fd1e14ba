//! Grid-of-rooms benchmark for corridor-constrained trajectory optimization.
//!
//! A trial generates rooms with collision points on shared walls, walks a
//! random room sequence, fits a reference curve and ellipsoidal corridor
//! through the doors, then minimizes average acceleration over the lifted
//! parameterization and records timing and quality metrics.

pub mod config;
pub mod env;
pub mod suite;
pub mod trial;
pub mod waypoints;

pub use config::{BenchConfig, HorizonPolicy, SolverSection};
pub use env::{generate_environment, RoomGrid};
pub use suite::{run_suite, SuiteSummary};
pub use trial::{prepare, recheck, run_trial, BenchScenario, TrialRecord, TrialResult, TrialStatus};
