//! Sparse/dense matrix storage and the vector arithmetic the solver stack
//! builds on. All types are immutable after construction and operations are
//! pure, so values can be shared freely across threads.

pub mod banded;
pub mod csr;
pub mod dense;
pub mod vector;

pub use banded::BandedLu;
pub use csr::{max_abs_diff, scaled_triple_product, spgemm, BlockMatrixBuilder, SparseMatrix};
pub use dense::{DenseLu, DenseMatrix};
pub use vector::{axpy, dot, norm2, norm_inf, MonolithicVector};
