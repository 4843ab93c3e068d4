//! Plot-ready CSV and JSON emitters.
//!
//! Floats are written in scientific notation with 12 significant digits so
//! that files diff cleanly across platforms and runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl Cell {
    fn render(&self) -> String {
        match *self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(x),
        }
    }
}

/// 12 significant digits, scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    // normalize -0 so identical values always print identically
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

pub fn write_csv<I>(mut out: impl Write, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<Cell>>,
{
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = create_file(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_fixed_width_scientific() {
        assert_eq!(format_float(1.0), "1.00000000000e0");
        assert_eq!(format_float(-0.0), "0.00000000000e0");
        assert_eq!(format_float(0.976329), "9.76329000000e-1");
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &["iter", "F"],
            vec![vec![Cell::Int(0), Cell::Float(0.25)], vec![Cell::Int(1), Cell::Float(0.5)]],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,F\n0,2.50000000000e-1\n1,5.00000000000e-1\n"
        );
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&("x", 1)).unwrap();
        let b = config_hash(&("x", 1)).unwrap();
        let c = config_hash(&("x", 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }
}
