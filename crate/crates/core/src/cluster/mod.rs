//! Final representation, k-means, and external clustering metrics.

mod kmeans;
mod metrics;

pub use kmeans::{kmeans, ClusteringResult, KMeansConfig};
pub use metrics::{
    acc, ari, evaluate, f1_macro, f1_pairwise, hungarian_map, nmi, pair_counts, F1Kind,
    MetricReport, PairCounts,
};

use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot form {clusters} clusters from {samples} samples")]
    TooManyClusters { clusters: usize, samples: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("embedding blocks have {0:?} rows")]
    RowMismatch(Vec<usize>),
    #[error("embedding block {0} is empty")]
    EmptyBlock(usize),
    #[error("embedding has a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
}

/// `[H1, H2, H]`, the representation clustered at the end of training.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    matrix: Matrix,
    widths: [usize; 3],
}

impl Embedding {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Widths of the three blocks in order.
    pub fn widths(&self) -> [usize; 3] {
        self.widths
    }
}

pub fn concat_representation(
    h1: &Matrix,
    h2: &Matrix,
    h: &Matrix,
) -> Result<Embedding, ClusterError> {
    let blocks = [h1, h2, h];
    if blocks.iter().any(|b| b.rows() != h1.rows()) {
        return Err(ClusterError::RowMismatch(
            blocks.iter().map(|b| b.rows()).collect(),
        ));
    }
    if let Some(i) = blocks.iter().position(|b| b.cols() == 0) {
        return Err(ClusterError::EmptyBlock(i));
    }
    for b in blocks {
        if let Some((r, c)) = b.first_non_finite() {
            return Err(ClusterError::NonFinite(r, c));
        }
    }
    let matrix = Matrix::hconcat(&blocks).expect("row counts checked");
    Ok(Embedding {
        matrix,
        widths: [h1.cols(), h2.cols(), h.cols()],
    })
}
