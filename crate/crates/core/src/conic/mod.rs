//! Conic optimization: program representation, an interior-point solver for
//! zero, nonnegative, second-order and PSD cones, and dense matrix helpers.

mod builder;
mod cones;
mod program;
pub mod psd;
mod solver;

pub use builder::{HermitianVar, LinExpr, ProgramBuilder};
pub use program::{Cone, ConeProgram, SparseMatrix};
pub use psd::{hermitian_embed, leading_eigenvector, psd_project, rank_ratio};
pub use solver::{solve, ConeSolution, Residuals, SolveStatus, SolverOptions};
