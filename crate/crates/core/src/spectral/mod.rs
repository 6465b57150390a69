//! Weighted Sturm–Liouville eigenproblem with Robin boundary conditions.

mod basis;
mod grid;
mod problem;
mod shooting;

pub use basis::{solve_eigensystem, SpectralBasis, SCAN_STEP};
pub use grid::Grid;
pub use problem::{Coefficient, SturmLiouvilleProblem};
