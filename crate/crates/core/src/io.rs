//! CSV and structured-text helpers. Floats are written with Rust's
//! shortest round-trip formatting, so files are byte-stable and re-read
//! bit-exactly.

use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(())
}

/// Writes a table given column names and already-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Samples as CSV, one row per sample, columns `x0, x1, ...`.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("x{j}")).collect();
    let rows: Vec<Vec<String>> = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    write_table(path, &header, &rows)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => csv_err(path, format!("{other:?}")),
    })?;
    let dim = r.headers().map_err(|e| csv_err(path, e))?.len();
    if dim == 0 {
        return Err(csv_err(path, "no columns"));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != dim {
            return Err(csv_err(path, format!("row {} has {} fields, expected {dim}", i + 1, rec.len())));
        }
        for f in rec.iter() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| csv_err(path, format!("row {}: `{f}` is not a number", i + 1)))?;
            data.push(v);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, dim), data).map_err(|e| csv_err(path, e))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.csv");
        let m = array![[0.1, -1e-300], [std::f64::consts::PI, 12345.678901234567]];
        write_matrix(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x0,x1\n"));
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn bad_cells_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "x0,x1\n1,2\n3,oops\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Csv { .. })));
        assert!(matches!(
            read_matrix(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
