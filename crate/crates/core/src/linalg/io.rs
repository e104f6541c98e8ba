//! Matrix Market coordinate files and raw little-endian vector files.
//!
//! A vector `name.f64le` is stored as raw `f64` values in little-endian byte
//! order next to a sidecar `name.json` of the form
//! `{"len": n, "dtype": "f64le"}`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn write_matrix_market(path: &Path, a: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        // {:e} prints the shortest representation that round-trips.
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))??;
    let lower = header.to_ascii_lowercase();
    let fields: Vec<&str> = lower.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::format(path, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" || fields[3] != "real" {
        return Err(Error::format(path, "only coordinate real matrices are supported"));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::format(path, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        let bad = || Error::format(path, format!("malformed line `{trimmed}`"));
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(bad());
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad());
                let dims = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
                triplets.reserve(dims.2);
                size = Some(dims);
            }
            Some((rows, cols, _)) => {
                if parts.len() != 3 {
                    return Err(bad());
                }
                let i: usize = parts[0].parse().map_err(|_| bad())?;
                let j: usize = parts[1].parse().map_err(|_| bad())?;
                let v: f64 = parts[2].parse().map_err(|_| bad())?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::format(path, format!("index ({i}, {j}) out of range")));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::format(path, "missing size line"))?;
    let expected = if symmetric {
        triplets.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        triplets.len()
    };
    if expected != nnz {
        return Err(Error::format(
            path,
            format!("declared {nnz} entries, found {expected}"),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorSidecar {
    pub len: usize,
    pub dtype: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `values` to `path` (raw f64le) plus its JSON sidecar.
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = VectorSidecar {
        len: values.len(),
        dtype: "f64le".into(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec(&sidecar)?)?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let sidecar: VectorSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.dtype != "f64le" {
        return Err(Error::format(path, format!("unsupported dtype `{}`", sidecar.dtype)));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != sidecar.len * 8 {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", sidecar.len * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect())
}

/// Raw f64le column-major matrix without sidecar (used for mode matrices).
pub fn write_f64le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64le(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", expected_len * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect())
}
