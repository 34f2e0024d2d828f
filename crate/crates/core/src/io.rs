//! CSV and JSON artifacts.
//!
//! Numbers are written in plain decimal with 12 significant digits, '.'
//! as the separator and LF line endings, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::grid::GridCdf;
use crate::{Error, Result};

/// Format with 12 significant digits in plain decimal notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (11 - exp).clamp(0, 30) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

/// Write a grid CDF as `x,<label>` rows.
pub fn write_grid_csv(path: &Path, grid: &GridCdf, label: &str) -> Result<()> {
    let mut out = String::with_capacity(grid.len() * 24);
    let _ = writeln!(out, "x,{label}");
    for (i, v) in grid.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_sig(grid.node(i)), fmt_sig(*v));
    }
    write_file(path, &out)
}

/// Read a two-column `x,F` CSV (header optional) into a grid CDF; the x
/// column must be uniformly spaced and increasing.
pub fn read_grid_csv(path: &Path) -> Result<GridCdf> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(x), Ok(f)) => rows.push((x, f)),
            _ if lineno == 0 => continue, // header
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: expected two numeric columns, got {line:?}", lineno + 1),
                })
            }
        }
    }
    if rows.len() < 2 {
        return Err(Error::Parse { path: path.display().to_string(), message: "need at least 2 data rows".into() });
    }
    let step = rows[1].0 - rows[0].0;
    if step <= 0.0 {
        return Err(Error::Parse { path: path.display().to_string(), message: "x column must be increasing".into() });
    }
    for w in rows.windows(2) {
        if ((w[1].0 - w[0].0) - step).abs() > 1e-6 * step.max(1e-12) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("x column must be uniformly spaced (step {step} broken near x = {})", w[1].0),
            });
        }
    }
    GridCdf::new(rows[0].0, step, rows.into_iter().map(|(_, f)| f).collect())
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
}

/// Write particle positions as a one-column CSV.
pub fn write_positions_csv(path: &Path, positions: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(positions.len() * 16 + 16);
    out.push_str("position\n");
    for p in positions {
        let _ = writeln!(out, "{}", fmt_sig(*p));
    }
    write_file(path, &out)
}

pub fn read_positions_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(x) => out.push(x),
            Err(_) if lineno == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: expected a number, got {line:?}", lineno + 1),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse { path: path.display().to_string(), message: "no positions found".into() });
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    s.push('\n');
    write_file(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(-0.125), "-0.125");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_sig(1234.56789), "1234.56789");
        assert_eq!(fmt_sig(1e-4), "0.0001");
        assert_eq!(fmt_sig(123456789012345.0), "123456789012345");
    }

    #[test]
    fn grid_csv_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gamma.csv");
        let g = GridCdf::from_fn(-2.0, 0.25, 17, |x| crate::kernels::closed_form_value(1, 0.0, 2.0 * x)).unwrap();
        write_grid_csv(&path, &g, "gamma").unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let g2 = read_grid_csv(&path).unwrap();
        write_grid_csv(&path, &g2, "gamma").unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        assert!(bytes1.ends_with(b"\n"));
        assert!(!bytes1.contains(&b'\r'));
        assert!((g2.eval(0.3) - g.eval(0.3)).abs() < 1e-11);
    }

    #[test]
    fn positions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        write_positions_csv(&path, &[1.5, -0.25, 3.125]).unwrap();
        assert_eq!(read_positions_csv(&path).unwrap(), vec![1.5, -0.25, 3.125]);
    }

    #[test]
    fn malformed_csv_is_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,F\n0,0\nnot,numeric\n").unwrap();
        let err = read_grid_csv(&path).unwrap_err();
        assert!(err.to_string().contains("bad.csv"));
    }
}
