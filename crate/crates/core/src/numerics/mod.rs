//! Dense matrices, small factorizations, and a reverse-mode tape that can
//! differentiate the full training objective.

mod linalg;
mod matrix;
mod tape;

pub use linalg::{
    cholesky_lower, max_eigenvalue, pairwise_squared_distances, row_topk_mask, solve_triangular,
    solve_triangular_transposed,
};
pub use matrix::{gemm, Matrix};
pub use tape::{Expr, GradientSet, Tape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: expected a square matrix, got {shape:?}")]
    NotSquare {
        op: &'static str,
        shape: (usize, usize),
    },
    #[error("{op}: matrix is not symmetric")]
    NotSymmetric { op: &'static str },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BufferLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("expected a 1x1 result, got {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("{op}: non-finite value at ({row}, {col})")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
    },
    #[error("cholesky: non-positive pivot {value:e} at index {pivot}")]
    CholeskyFailed { pivot: usize, value: f64 },
    #[error("triangular solve: zero diagonal at index {index}")]
    SingularTriangular { index: usize },
    #[error("top-k: k = {k} outside [1, {admissible}]")]
    TopKOutOfRange { k: usize, admissible: usize },
}
