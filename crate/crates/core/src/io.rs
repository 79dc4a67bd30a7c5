//! Headerless CSV matrices and instance/ground-truth bundles.
//!
//! A matrix file holds one comma-separated row per line. Values are written
//! in Rust's shortest round-trip form, so reading a written file reproduces
//! every entry bit for bit. A matrix with zero columns is written as an
//! empty file and read back as `0×0`; callers that know the row count use
//! [`read_matrix_shaped`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroundTruth, ModelSpec, ProblemInstance};
use crate::numerics::Matrix;

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if m.ncols() > 0 {
        for row in m.row_iter() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.write_record(&fields)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| match e {
        Error::Malformed(msg) => Error::Malformed(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a matrix and checks its shape; an empty file is accepted as
/// `rows×0`.
pub fn read_matrix_shaped(path: impl AsRef<Path>, rows: usize, cols: Option<usize>) -> Result<Matrix> {
    let m = read_matrix(&path)?;
    if m.is_empty() && cols.unwrap_or(0) == 0 {
        return Ok(Matrix::zeros(rows, 0));
    }
    if m.nrows() != rows || cols.is_some_and(|c| c != m.ncols()) {
        return Err(Error::Malformed(format!(
            "{}: expected {rows}x{} entries, found {}x{}",
            path.as_ref().display(),
            cols.map_or("?".to_string(), |c| c.to_string()),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Malformed(format!("row {}: {e}", line + 1)))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Malformed(format!(
                    "row {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Malformed(format!("row {}, column {}: {field:?} is not a number", line + 1, j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed(format!("row {}, column {}: non-finite value", line + 1, j + 1)));
            }
            entries.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Matrix::from_row_slice(rows, cols, &entries))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Sidecar metadata for a saved instance or ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub m: usize,
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicate: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `<prefix>_a.csv`, `<prefix>_b.csv` and `<prefix>_meta.json`.
pub fn save_instance(prefix: impl AsRef<Path>, inst: &ProblemInstance, meta: &BundleMeta) -> Result<()> {
    let prefix = prefix.as_ref();
    write_matrix(with_suffix(prefix, "_a.csv"), &inst.a)?;
    write_matrix(with_suffix(prefix, "_b.csv"), &inst.b)?;
    write_json(&with_suffix(prefix, "_meta.json"), meta)
}

pub fn load_instance(prefix: impl AsRef<Path>) -> Result<ProblemInstance> {
    let prefix = prefix.as_ref();
    let meta_path = with_suffix(prefix, "_meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::Io(format!("{}: {e}", meta_path.display())))?;
    let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
    let a = read_matrix_shaped(with_suffix(prefix, "_a.csv"), meta.m, Some(meta.n))?;
    let b = read_matrix_shaped(with_suffix(prefix, "_b.csv"), meta.m, Some(meta.ell))?;
    ProblemInstance::new(a, b, meta.k)
}

/// Writes the noiseless blocks (`_abar`, `_bbar`, `_xmin`, `_w`, `_ybar`)
/// and `<prefix>_truth.json`.
pub fn save_ground_truth(prefix: impl AsRef<Path>, gt: &GroundTruth, meta: &BundleMeta) -> Result<()> {
    let prefix = prefix.as_ref();
    write_matrix(with_suffix(prefix, "_abar.csv"), &gt.a_bar)?;
    write_matrix(with_suffix(prefix, "_bbar.csv"), &gt.b_bar)?;
    write_matrix(with_suffix(prefix, "_xmin.csv"), &gt.x_min)?;
    write_matrix(with_suffix(prefix, "_w.csv"), &gt.w)?;
    write_matrix(with_suffix(prefix, "_ybar.csv"), &gt.y_bar)?;
    write_json(&with_suffix(prefix, "_truth.json"), meta)
}
