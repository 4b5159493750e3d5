//! CSV serialization of matrices and vectors.
//!
//! One matrix row per line, comma separated, no header, `.` as decimal
//! separator. Numbers are written in the shortest form that parses back to
//! the same `f64`, so a write/read/write cycle is byte-stable. Vectors are
//! stored as single-column matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(v: &Vector) -> String {
    let mut out = String::with_capacity(v.len() * 20);
    for x in v.iter() {
        let _ = writeln!(out, "{x:?}");
    }
    out
}

/// Parses a CSV matrix; every line must have the same number of fields.
pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("line {}: {e}", line + 1)))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse(format!(
                    "line {}: expected {c} fields, found {}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("line {}: {field}", line + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

pub fn vector_from_csv(text: &str) -> Result<Vector> {
    let m = matrix_from_csv(text)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!("expected one value per line, found {} columns", m.ncols())));
    }
    Ok(m.column(0).into_owned())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

/// Reads a matrix and checks its shape.
pub fn read_matrix_shaped(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let m = read_matrix(path)?;
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected {rows}x{cols}, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

pub fn read_vector(path: &Path) -> Result<Vector> {
    vector_from_csv(&fs::read_to_string(path)?)
}

pub fn read_vector_len(path: &Path, len: usize) -> Result<Vector> {
    let v = read_vector(path)?;
    if v.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected {len} entries, found {}",
            path.display(),
            v.len()
        )));
    }
    Ok(v)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn write_vector(path: &Path, v: &Vector) -> Result<()> {
    fs::write(path, vector_to_csv(v))?;
    Ok(())
}
