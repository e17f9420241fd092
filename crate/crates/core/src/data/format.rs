//! On-disk matrix formats: decimal CSV and the `MVMAT001` binary layout.
//!
//! `MVMAT001` is the 8-byte ASCII magic, then `rows` and `cols` as
//! little-endian `u64`, then `rows * cols` little-endian IEEE-754 `f64`
//! values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::Matrix;

pub const MVMAT_MAGIC: &[u8; 8] = b"MVMAT001";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Mvmat,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Mvmat => "mvmat",
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "mvmat" | "mvmat001" | "bin" => Ok(MatrixFormat::Mvmat),
            other => Err(format!(
                "unknown matrix format `{other}` (expected csv or mvmat)"
            )),
        }
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix, DataError> {
    match format {
        MatrixFormat::Csv => read_csv(path),
        MatrixFormat::Mvmat => read_mvmat(path),
    }
}

pub fn write_matrix(path: &Path, m: &Matrix, format: MatrixFormat) -> Result<(), DataError> {
    match format {
        MatrixFormat::Csv => write_csv(path, m),
        MatrixFormat::Mvmat => write_mvmat(path, m),
    }
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::io(path, e)
        }
    })
}

pub fn read_mvmat(path: &Path) -> Result<Matrix, DataError> {
    let mut r = BufReader::new(open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| DataError::io(path, e))?;
    decode_mvmat(&bytes).map_err(|reason| DataError::Malformed {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn decode_mvmat(bytes: &[u8]) -> Result<Matrix, String> {
    if bytes.len() < 24 || &bytes[..8] != MVMAT_MAGIC {
        return Err("missing MVMAT001 header".into());
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or("header shape overflows")?;
    let body = &bytes[24..];
    if body.len() != expected {
        return Err(format!(
            "payload holds {} bytes, header {rows}x{cols} needs {expected}",
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
}

pub fn encode_mvmat(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.as_slice().len());
    out.extend_from_slice(MVMAT_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_mvmat(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    w.write_all(&encode_mvmat(m))
        .and_then(|_| w.flush())
        .map_err(|e| DataError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Matrix, DataError> {
    let file = open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(DataError::Malformed {
                    path: path.to_path_buf(),
                    reason: format!("row {r} has {} fields, expected {c}", record.len()),
                })
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::Malformed {
                path: path.to_path_buf(),
                reason: format!("cannot parse `{field}` at ({r}, {c})"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data).map_err(|e| DataError::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_csv(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    let mut buf: Vec<String> = Vec::with_capacity(m.cols());
    for r in 0..m.rows() {
        buf.clear();
        // `Display` for f64 prints the shortest string that parses back to
        // the same bits.
        buf.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&buf).map_err(|e| DataError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// One integer per line; blank lines are ignored.
pub fn read_labels(path: &Path) -> Result<Vec<i64>, DataError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| DataError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|_| DataError::Malformed {
                path: path.to_path_buf(),
                reason: format!("line {}: `{}` is not an integer label", i + 1, l.trim()),
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}
