//! CSV matrix and edge-list formats shared by the CLI and the test suites.
//!
//! Matrix CSV: rows = nodes, columns = samples, no header unless requested.
//! Edge lists are `i,j,weight` with 1-indexed node labels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, SignalMatrix};

/// Parses a dense matrix. Ragged rows and non-finite values are rejected.
pub fn parse_matrix_csv(text: &str, header: bool) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if header && lineno == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Csv(format!("bad number {:?} at line {}", field.trim(), lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("non-finite value at line {}", lineno + 1)));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Csv(format!("row length mismatch at line {}", lineno + 1)));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("matrix csv".into()));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn parse_signal_csv(text: &str, header: bool) -> Result<SignalMatrix> {
    SignalMatrix::new(parse_matrix_csv(text, header)?)
}

/// Parses a matrix where empty cells mark unobserved entries. Returns the
/// filled matrix (unobserved entries as 0) plus per-column observed index
/// sets.
pub fn parse_masked_csv(text: &str, header: bool) -> Result<(DMatrix<f64>, Vec<Vec<usize>>)> {
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if header && lineno == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let f = field.trim();
            if f.is_empty() {
                row.push(None);
            } else {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Csv(format!("bad number {f:?} at line {}", lineno + 1)))?;
                if !v.is_finite() {
                    return Err(Error::Csv(format!("non-finite value at line {}", lineno + 1)));
                }
                row.push(Some(v));
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Csv(format!("row length mismatch at line {}", lineno + 1)));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("matrix csv".into()));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    let filled = DMatrix::from_fn(nr, nc, |i, j| rows[i][j].unwrap_or(0.0));
    let masks = (0..nc)
        .map(|j| (0..nr).filter(|&i| rows[i][j].is_some()).collect())
        .collect();
    Ok((filled, masks))
}

/// Writes a matrix with round-trippable float formatting.
pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Edge list `i,j,weight`, 1-indexed. Undirected graphs emit each pair once.
pub fn write_edge_list(g: &Graph, tol: f64) -> String {
    let mut out = String::new();
    for (i, j) in g.support(tol) {
        out.push_str(&format!("{},{},{}\n", i + 1, j + 1, g.weights()[(i, j)]));
    }
    out
}
