//! Dense linear algebra for the projection fit.

mod dense;
mod eigen;
mod sylvester;

pub(crate) use dense::dot;
pub use dense::DenseMatrix;
pub use eigen::{sym_eigen, SymEigen, DEFAULT_TOL, MAX_SWEEPS, SYMMETRY_TOL};
pub use sylvester::{sylvester_residual, sylvester_solve, MIN_PAIR_SUM, PSD_TOL};
