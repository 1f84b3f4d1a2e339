//! Nonlinear finite-memory system identification with double-truncated
//! Volterra series whose coefficients are fitted by `l_q`-constrained least
//! squares (`q >= 1`).

pub mod bounds;
pub mod data;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod norms;
pub mod simulator;
pub mod solver;
pub mod tuning;

pub use data::Dataset;
pub use dictionary::{CoefficientVector, MultiIndex, RegressorMatrix, VolterraStructure};
pub use error::{Error, Result};
pub use solver::{fit, FitReport, QuadraticObjective, SolverOptions, SolverPath};
