//! FROSTT `.tns` text format: one nonzero per line, 1-based coordinates
//! followed by the value; `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use spttn_core::{DenseTensor, SparseCoo};

use crate::error::{CliError, Result};

/// Parses `.tns` text. `order` fixes the number of coordinates per line
/// (taken from the first data line otherwise); `dims` overrides the
/// inferred per-mode maximum coordinate.
pub fn parse_tns(
    text: &str,
    source: &str,
    order: Option<usize>,
    dims: Option<&[usize]>,
) -> Result<SparseCoo> {
    let err = |line: usize, message: String| CliError::Tns {
        path: source.to_string(),
        line,
        message,
    };
    let mut order = order;
    let mut entries: Vec<(Vec<usize>, f64)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let d = *order.get_or_insert(tokens.len().saturating_sub(1));
        if d == 0 || tokens.len() != d + 1 {
            return Err(err(
                line_no,
                format!(
                    "expected {} coordinates and a value, found {} fields",
                    d,
                    tokens.len()
                ),
            ));
        }
        let mut coords = Vec::with_capacity(d);
        for tok in &tokens[..d] {
            let c: usize = tok
                .parse()
                .map_err(|_| err(line_no, format!("bad coordinate '{}'", tok)))?;
            if c < 1 {
                return Err(err(line_no, "coordinates are 1-based".into()));
            }
            coords.push(c - 1);
        }
        let value: f64 = tokens[d]
            .parse()
            .map_err(|_| err(line_no, format!("bad value '{}'", tokens[d])))?;
        entries.push((coords, value));
    }
    let dims = match dims {
        Some(d) => {
            if order.is_some_and(|o| o != d.len()) {
                return Err(err(
                    0,
                    format!("file has order {}, expected {}", order.unwrap(), d.len()),
                ));
            }
            d.to_vec()
        }
        None => {
            let Some(o) = order else {
                return Err(err(
                    0,
                    "no entries; dimensions must be given explicitly".into(),
                ));
            };
            (0..o)
                .map(|m| entries.iter().map(|(c, _)| c[m] + 1).max().unwrap_or(0))
                .collect()
        }
    };
    SparseCoo::new(dims, entries).map_err(|e| err(0, e.to_string()))
}

pub fn read_tns(path: &Path, order: Option<usize>, dims: Option<&[usize]>) -> Result<SparseCoo> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tns(&text, &path.display().to_string(), order, dims)
}

fn push_line(out: &mut String, coords: &[usize], v: f64) {
    for c in coords {
        write!(out, "{} ", c + 1).unwrap();
    }
    // `{}` prints the shortest text that parses back to the same f64
    writeln!(out, "{}", v).unwrap();
}

pub fn format_sparse(t: &SparseCoo) -> String {
    let mut out = String::new();
    for (c, v) in t.entries() {
        push_line(&mut out, c, *v);
    }
    out
}

/// Every entry of a dense tensor, zeros included.
pub fn format_dense(t: &DenseTensor) -> String {
    let mut out = String::new();
    let mut coords = vec![0usize; t.order()];
    for &v in t.data() {
        push_line(&mut out, &coords, v);
        for m in (0..coords.len()).rev() {
            coords[m] += 1;
            if coords[m] < t.dims()[m] {
                break;
            }
            coords[m] = 0;
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a dense tensor stored as `.tns` with the given shape; missing
/// entries are zero.
pub fn read_dense(path: &Path, dims: &[usize]) -> Result<DenseTensor> {
    let coo = read_tns(path, Some(dims.len()), Some(dims))?;
    Ok(coo.to_dense())
}
