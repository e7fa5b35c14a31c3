//! Matrix and vector files.
//!
//! Binary layout: 8-byte magic `QPCRMAT1`, row count and column count as
//! little-endian `u64`, then the entries row-major as little-endian `f64`.
//! Vectors are stored as one-column matrices. Files ending in `.csv` use the
//! text variant instead: one matrix row per line, comma separated, `#` lines
//! ignored.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QPCRMAT1";
const HEADER_LEN: usize = 24;

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `m` in the format chosen by the file extension.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let bytes = if is_csv(path) {
        encode_csv(m).into_bytes()
    } else {
        encode_binary(m)
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "not valid UTF-8".into(),
        })?;
        decode_csv(&text, path)
    } else {
        decode_binary(&bytes, path)
    }
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

/// Reads a one-column (or one-row) matrix as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 && m.nrows() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("expected a vector, found a {} x {} matrix", m.nrows(), m.ncols()),
        });
    }
    Ok(DVector::from_iterator(m.len(), m.transpose().iter().copied()))
}

pub fn encode_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let (rows, cols) = (word(1), word(2));
    let overflow = || Error::DimensionOverflow {
        path: path.to_path_buf(),
        rows,
        cols,
    };
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(overflow)?;
    let total = payload.checked_add(HEADER_LEN as u64).ok_or_else(overflow)?;
    let (rows_us, cols_us) = match (usize::try_from(rows), usize::try_from(cols)) {
        (Ok(r), Ok(c)) if usize::try_from(total).is_ok() => (r, c),
        _ => return Err(overflow()),
    };
    let found = bytes.len() as u64;
    if found < total {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: total,
            found,
        });
    }
    if found > total {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{} trailing bytes after the payload", found - total),
        });
    }
    let data = &bytes[HEADER_LEN..];
    Ok(DMatrix::from_fn(rows_us, cols_us, |i, j| {
        let k = 8 * (i * cols_us + j);
        f64::from_le_bytes(data[k..k + 8].try_into().unwrap())
    }))
}

/// Shortest round-trip decimal for every entry.
pub fn encode_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("`{}`: {e}", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(format!("expected {c} fields, found {}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &values))
}
