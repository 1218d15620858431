//! Tabular (CSV) and mesh (OBJ) outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::ErrorSummary;
use crate::surface::HeightMap;

pub const SUMMARY_HEADER: &str = "dataset,method,params,mean_deg,median_deg,excluded";

/// One summary row. `params` is free text; commas and newlines are replaced
/// so the row stays one line of six fields.
pub fn summary_row(dataset: &str, method: &str, params: &str, s: &ErrorSummary) -> String {
    let clean = |t: &str| t.replace([',', '\n', '\r'], ";");
    format!(
        "{},{},{},{:.6},{:.6},{}",
        clean(dataset),
        clean(method),
        clean(params),
        s.mean_deg,
        s.median_deg,
        s.excluded
    )
}

pub fn summary_csv<'a>(rows: impl IntoIterator<Item = &'a String>) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

/// `iteration,cost,nonzero_fraction`; the fraction is empty for the initial
/// cost and for solvers without codes.
pub fn cost_trace_csv(costs: &[f64], sparsity: &[f64]) -> String {
    let mut out = String::from("iteration,cost,nonzero_fraction\n");
    for (i, c) in costs.iter().enumerate() {
        let frac = i.checked_sub(1).and_then(|j| sparsity.get(j));
        match frac {
            Some(f) => {
                let _ = writeln!(out, "{i},{c:.12e},{f:.6}");
            }
            None => {
                let _ = writeln!(out, "{i},{c:.12e},");
            }
        }
    }
    out
}

/// Grid mesh with one vertex per pixel (`x` = column, `y` = -row, `z` =
/// height) and two triangles per quad whose four corners are all valid.
pub fn height_obj(h: &HeightMap) -> String {
    let (rows, cols) = (h.rows(), h.cols());
    let mut out = String::new();
    for c in 0..cols {
        for r in 0..rows {
            let _ = writeln!(out, "v {} {} {:.6}", c, -(r as f64), h.get(r, c));
        }
    }
    let valid = h.valid();
    let id = |r: usize, c: usize| r + c * rows + 1;
    for c in 0..cols.saturating_sub(1) {
        for r in 0..rows.saturating_sub(1) {
            if valid.get(r, c) && valid.get(r + 1, c) && valid.get(r, c + 1) && valid.get(r + 1, c + 1) {
                let _ = writeln!(out, "f {} {} {}", id(r, c), id(r + 1, c), id(r, c + 1));
                let _ = writeln!(out, "f {} {} {}", id(r + 1, c), id(r + 1, c + 1), id(r, c + 1));
            }
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
