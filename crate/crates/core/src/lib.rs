//! Solvers for multiobjective optimal control problems constrained by
//! POD-Galerkin reduced-order models.

pub mod adjoint;
pub mod error;
pub mod io;
pub mod linesearch;
pub mod mop;
pub mod pod;
pub mod problems;
pub mod refpoint;
pub mod rom;
pub mod subdivision;

pub use error::{MocpError, Result};
pub use mop::{dominates, leq_p, nondominated_filter, Bounds, MopProblem, ObjectiveVector};
