//! Flat-file formats: clock grids, observation paths and numeric CSV output.
//!
//! Numbers are written with 17 significant digits, `.` as decimal separator
//! and `\n` line endings so output is byte-stable across runs and platforms.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header row followed by numeric rows.
pub fn write_numeric_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidParameter(format!("row has {} fields, header has {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush()?;
    Ok(())
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", path.display())))
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = names.iter().map(|n| column_index(&headers, n, path)).collect::<Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            let field = record.get(i).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| {
                Error::Config(format!("{}: row {}: '{field}' is not a number", path.display(), line + 2))
            })?;
            col.push(v);
        }
    }
    Ok(cols)
}

/// Reads `t,tau_prime` rows for a grid clock.
pub fn read_clock_grid(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut cols = read_columns(path, &["t", "tau_prime"])?;
    let slopes = cols.pop().unwrap();
    let times = cols.pop().unwrap();
    if times.len() < 2 {
        return Err(Error::Config(format!("{}: grid clock needs at least two rows", path.display())));
    }
    Ok((times, slopes))
}

/// Log-price and extra-signal observations on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
}

/// Reads a path CSV with columns `t`, `Y`, `m` (extra columns are ignored).
pub fn read_path_csv(path: &Path) -> Result<ObservedPath> {
    let mut cols = read_columns(path, &["t", "Y", "m"])?;
    let m = cols.pop().unwrap();
    let y = cols.pop().unwrap();
    let t = cols.pop().unwrap();
    if t.len() < 2 {
        return Err(Error::Config(format!("{}: path needs at least two rows", path.display())));
    }
    let dt = t[1] - t[0];
    let uniform = dt > 0.0 && t.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1e-300));
    if !uniform {
        return Err(Error::Config(format!("{}: time grid must be uniform", path.display())));
    }
    Ok(ObservedPath { t, y, m })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("path.csv");
        let rows = vec![vec![0.0, 0.0, 0.0, 9.0], vec![0.5, 0.1, -0.2, 9.0], vec![1.0, 0.3, 0.1, 9.0]];
        write_numeric_csv(std::fs::File::create(&p).unwrap(), &["t", "Y", "m", "extra"], &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,Y,m,extra\n"));
        assert!(!text.contains('\r'));
        let path = read_path_csv(&p).unwrap();
        assert_eq!(path.y, vec![0.0, 0.1, 0.3]);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "t,Y,m\n0,0,0\n0.5,1,1\n2,1,1\n").unwrap();
        assert!(read_path_csv(&bad).is_err());
        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "t,tau\n0,1\n1,1\n").unwrap();
        assert!(matches!(read_clock_grid(&missing), Err(Error::Config(_))));
    }
}
