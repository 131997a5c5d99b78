//! Matrix files and atomic output.
//!
//! A matrix file holds one or more blocks. Each block is a `rows cols` line
//! followed by the entries in row-major order, 17 significant digits each.
//! Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

pub fn format_matrices(blocks: &[DMatrix<f64>]) -> String {
    let mut out = String::new();
    for m in blocks {
        writeln!(out, "{} {}", m.nrows(), m.ncols()).expect("write to string");
        for r in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols())
                .map(|c| format!("{:.16e}", m[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" ")).expect("write to string");
        }
    }
    out
}

pub fn parse_matrices(text: &str) -> Result<Vec<DMatrix<f64>>, CliError> {
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace);
    let mut blocks = Vec::new();
    while let Some(first) = tokens.next() {
        let rows: usize = first
            .parse()
            .map_err(|_| CliError::usage(format!("expected a row count, found `{first}`")))?;
        let cols: usize = tokens
            .next()
            .ok_or_else(|| CliError::usage("missing column count"))?
            .parse()
            .map_err(|_| CliError::usage("invalid column count"))?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let tok = tokens
                .next()
                .ok_or_else(|| CliError::usage(format!("block {} ends early", blocks.len())))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::usage(format!("invalid number `{tok}`")))?;
            values.push(v);
        }
        blocks.push(DMatrix::from_row_slice(rows, cols, &values));
    }
    Ok(blocks)
}

pub fn read_matrices(path: &Path) -> Result<Vec<DMatrix<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_matrices(&text)
}

/// Writes through a temporary file in the same directory and renames it over
/// `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err =
        |e: std::io::Error| CliError::usage(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
