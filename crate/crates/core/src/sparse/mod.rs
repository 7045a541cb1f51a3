//! Sparse symmetric storage, fill-reducing ordering and Cholesky.

mod amd;
mod cholesky;
mod csr;
mod error;
mod ordering;
mod perm;
mod sym;

pub use amd::{amd_order, amd_order_constrained, amd_order_pattern, quotient_order, Score};
pub use cholesky::{cholesky, sample_gaussian_by_precision, CholeskyFactor, SymbolicCholesky, PIVOT_TOL};
pub use csr::SparseMatrix;
pub use error::LinalgError;
pub use ordering::{analyze_fill_reducing, fill_reducing_order, min_fill_order, MIN_FILL_MAX_DIM};
pub use perm::Permutation;
pub use sym::SparseSymMatrix;
