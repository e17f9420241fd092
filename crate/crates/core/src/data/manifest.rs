use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{read_labels, read_matrix, write_labels, write_matrix, MatrixFormat};
use super::{compact_labels, DataError, ViewSet};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
    pub format: MatrixFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub cluster_count: usize,
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_checksum: Option<String>,
}

/// `sha256:<hex>` of a file's bytes.
pub(crate) fn file_checksum(path: &Path) -> Result<String, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

fn verify_checksum(path: &Path, expected: Option<&str>) -> Result<(), DataError> {
    let Some(expected) = expected else {
        return Ok(());
    };
    let actual = file_checksum(path)?;
    if actual != expected {
        return Err(DataError::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Resolves a dataset argument: either the manifest file itself or a
/// directory holding `manifest.json`.
fn manifest_location(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<ViewSet, DataError> {
    let manifest_path = manifest_location(manifest_path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(manifest_path.clone())
        } else {
            DataError::io(&manifest_path, e)
        }
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DataError::Manifest {
            path: manifest_path.clone(),
            source,
        })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut views = Vec::with_capacity(manifest.views.len());
    let mut expected_rows = None;
    for (v, entry) in manifest.views.iter().enumerate() {
        let path = base.join(&entry.path);
        if !path.exists() {
            return Err(DataError::MissingFile(path));
        }
        match expected_rows {
            None => expected_rows = Some(entry.rows),
            Some(n) if n != entry.rows => {
                return Err(DataError::RowCountDisagreement {
                    view: v,
                    rows: entry.rows,
                    expected: n,
                })
            }
            _ => {}
        }
        verify_checksum(&path, entry.checksum.as_deref())?;
        let m = read_matrix(&path, entry.format)?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(DataError::ShapeMismatch {
                path,
                declared: (entry.rows, entry.cols),
                actual: m.shape(),
            });
        }
        views.push(m);
    }

    let labels = match &manifest.labels {
        Some(rel) => {
            let path = base.join(rel);
            verify_checksum(&path, manifest.labels_checksum.as_deref())?;
            let raw = read_labels(&path)?;
            let (labels, distinct) = compact_labels(&raw);
            if distinct > manifest.cluster_count {
                return Err(DataError::Labels(format!(
                    "{distinct} distinct labels but cluster_count is {}",
                    manifest.cluster_count
                )));
            }
            Some(labels)
        }
        None => None,
    };

    ViewSet::new(manifest.name, views, labels, manifest.cluster_count)
}

/// Writes `data` as a manifest directory with checksums. Returns the
/// manifest path.
pub fn save_dataset(
    data: &ViewSet,
    dir: &Path,
    format: MatrixFormat,
) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut entries = Vec::with_capacity(data.n_views());
    for (v, m) in data.views().iter().enumerate() {
        let rel = PathBuf::from(format!("view{v}.{}", format.extension()));
        let path = dir.join(&rel);
        write_matrix(&path, m, format)?;
        entries.push(ViewEntry {
            path: rel,
            rows: m.rows(),
            cols: m.cols(),
            format,
            checksum: Some(file_checksum(&path)?),
        });
    }
    let (labels, labels_checksum) = match data.labels() {
        Some(l) => {
            let rel = PathBuf::from("labels.txt");
            let path = dir.join(&rel);
            write_labels(&path, l)?;
            (Some(rel), Some(file_checksum(&path)?))
        }
        None => (None, None),
    };
    let manifest = DatasetManifest {
        name: data.name().to_string(),
        cluster_count: data.cluster_count(),
        views: entries,
        labels,
        labels_checksum,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
    Ok(path)
}
