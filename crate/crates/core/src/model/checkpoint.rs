//! Checkpoint directory: `index.json` plus one MVMAT file per parameter.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::data::{read_mvmat, write_mvmat, DataError};

pub const CHECKPOINT_INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub file: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub seed: u64,
    /// `sha256:<hex>` of the canonical training configuration JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub dataset_name: String,
    /// ε after escalation during the final forward pass.
    pub epsilon: f64,
    #[serde(default)]
    pub static_graph: bool,
    #[serde(default)]
    pub params: Vec<ParamShape>,
}

pub fn save_checkpoint(
    dir: &Path,
    params: &ModelParams,
    mut index: CheckpointIndex,
) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    index.params.clear();
    index.static_graph = params.is_static();
    for (name, m) in params.named() {
        let file = PathBuf::from(format!("{name}.mvmat"));
        write_mvmat(&dir.join(&file), m)?;
        index.params.push(ParamShape {
            name,
            file,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let path = dir.join(CHECKPOINT_INDEX);
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
    Ok(path)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, CheckpointIndex), DataError> {
    let path = dir.join(CHECKPOINT_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.clone())
        } else {
            DataError::io(&path, e)
        }
    })?;
    let index: CheckpointIndex =
        serde_json::from_str(&text).map_err(|source| DataError::Manifest {
            path: path.clone(),
            source,
        })?;
    let mut u = Vec::new();
    let mut w = [None, None, None];
    for p in &index.params {
        let file = dir.join(&p.file);
        let m = read_mvmat(&file)?;
        if m.shape() != (p.rows, p.cols) {
            return Err(DataError::ShapeMismatch {
                path: file,
                declared: (p.rows, p.cols),
                actual: m.shape(),
            });
        }
        match p.name.as_str() {
            "W1" => w[0] = Some(m),
            "W2" => w[1] = Some(m),
            "W3" => w[2] = Some(m),
            name if name.starts_with('U') => u.push(m),
            other => {
                return Err(DataError::Malformed {
                    path: path.clone(),
                    reason: format!("unknown parameter {other}"),
                })
            }
        }
    }
    let [Some(w1), Some(w2), Some(w3)] = w else {
        return Err(DataError::Malformed {
            path,
            reason: "W1, W2 and W3 are all required".into(),
        });
    };
    Ok((ModelParams { u, w1, w2, w3 }, index))
}
