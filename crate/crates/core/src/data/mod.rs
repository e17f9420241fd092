//! Multi-view datasets: the in-memory [`ViewSet`], the manifest directory
//! format, synthetic benchmarks, and column summaries.

mod format;
mod manifest;
mod stats;
mod synthetic;

use std::path::{Path, PathBuf};

pub use format::{
    decode_mvmat, encode_mvmat, read_csv, read_labels, read_matrix, read_mvmat, write_csv,
    write_labels, write_matrix, write_mvmat, MatrixFormat, MVMAT_MAGIC,
};
pub use manifest::{load_dataset, save_dataset, DatasetManifest, ViewEntry, MANIFEST_FILE};
pub use stats::{column_stats, ColumnSummary};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::numerics::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: declared shape {declared:?} but file holds {actual:?}")]
    ShapeMismatch {
        path: PathBuf,
        declared: (usize, usize),
        actual: (usize, usize),
    },
    #[error(
        "view {view} has {rows} rows, expected {expected} (row-count disagreement across views)"
    )]
    RowCountDisagreement {
        view: usize,
        rows: usize,
        expected: usize,
    },
    #[error("view {view}: non-finite entry at ({row}, {col})")]
    NonFinite { view: usize, row: usize, col: usize },
    #[error("{path}: checksum mismatch (expected {expected}, got {actual})")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("labels: {0}")]
    Labels(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Multi-view dataset: `V` matrices over the same `N` samples in the same
/// order, plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    name: String,
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
    cluster_count: usize,
}

impl ViewSet {
    /// Validates shapes, finiteness, and label range.
    pub fn new(
        name: impl Into<String>,
        views: Vec<Matrix>,
        labels: Option<Vec<usize>>,
        cluster_count: usize,
    ) -> Result<Self, DataError> {
        let Some(first) = views.first() else {
            return Err(DataError::Invalid(
                "a dataset needs at least one view".into(),
            ));
        };
        let n = first.rows();
        for (v, m) in views.iter().enumerate() {
            if m.rows() != n {
                return Err(DataError::RowCountDisagreement {
                    view: v,
                    rows: m.rows(),
                    expected: n,
                });
            }
            if m.cols() == 0 {
                return Err(DataError::Invalid(format!("view {v} has no columns")));
            }
            if let Some((row, col)) = m.first_non_finite() {
                return Err(DataError::NonFinite { view: v, row, col });
            }
        }
        if cluster_count == 0 {
            return Err(DataError::Invalid("cluster count must be positive".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DataError::Labels(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= cluster_count) {
                return Err(DataError::Labels(format!(
                    "label {bad} outside [0, {cluster_count})"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            views,
            labels,
            cluster_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Matrix {
        &self.views[v]
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(Matrix::cols).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    /// Same data with samples reordered: new sample `i` is old sample `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> ViewSet {
        ViewSet {
            name: self.name.clone(),
            views: self.views.iter().map(|m| m.permute_rows(order)).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| order.iter().map(|&i| l[i]).collect()),
            cluster_count: self.cluster_count,
        }
    }
}

/// Maps arbitrary integer labels onto `0..k` preserving their sort order.
pub fn compact_labels(raw: &[i64]) -> (Vec<usize>, usize) {
    let mut uniq: Vec<i64> = raw.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let labels = raw
        .iter()
        .map(|v| uniq.binary_search(v).expect("value present"))
        .collect();
    (labels, uniq.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_row_disagreement() {
        let err =
            ViewSet::new("x", vec![Matrix::zeros(4, 2), Matrix::zeros(5, 2)], None, 2).unwrap_err();
        assert!(matches!(
            err,
            DataError::RowCountDisagreement {
                view: 1,
                rows: 5,
                expected: 4
            }
        ));
    }

    #[test]
    fn rejects_non_finite_with_coordinates() {
        let mut m = Matrix::zeros(4, 3);
        m[(2, 1)] = f64::NAN;
        let err = ViewSet::new("x", vec![Matrix::zeros(4, 2), m], None, 2).unwrap_err();
        assert!(matches!(
            err,
            DataError::NonFinite {
                view: 1,
                row: 2,
                col: 1
            }
        ));
        assert!(err.to_string().contains("(2, 1)"));
    }

    #[test]
    fn label_range_checked() {
        assert!(ViewSet::new("x", vec![Matrix::zeros(2, 1)], Some(vec![0, 2]), 2).is_err());
        assert!(ViewSet::new("x", vec![Matrix::zeros(2, 1)], Some(vec![0]), 2).is_err());
    }

    #[test]
    fn compaction_preserves_order() {
        let (l, k) = compact_labels(&[5, 1, 5, 3]);
        assert_eq!(l, vec![2, 0, 2, 1]);
        assert_eq!(k, 3);
    }
}
