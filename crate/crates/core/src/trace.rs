//! Run traces and their CSV form.
//!
//! Schema version 1. Header:
//!
//! ```text
//! iter,component_evals,matvec_ops,gap_avg,gap_last,residual,elapsed_ms
//! ```
//!
//! Floats are written with 10 significant digits in scientific notation;
//! `iter`, `component_evals` and `elapsed_ms` are integers. Only
//! `elapsed_ms` is allowed to differ between repeated runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "iter,component_evals,matvec_ops,gap_avg,gap_last,residual,elapsed_ms";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u64,
    pub component_evals: u64,
    pub matvec_ops: f64,
    pub gap_avg: f64,
    pub gap_last: f64,
    pub residual: f64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub solver: String,
    pub eta: f64,
    pub gamma: f64,
    pub prob: f64,
    pub batch: usize,
    pub seed: u64,
    /// Seed actually fed to the generator (`seed ^ run_index`).
    pub stream_seed: u64,
    /// FNV-1a digest of the game matrix, 16 hex digits.
    pub problem_digest: String,
    pub dim: usize,
    pub num_components: usize,
    pub clamped: bool,
    pub large_batch_warning: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub metadata: RunMetadata,
    pub rows: Vec<TraceRow>,
}

pub fn format_row(r: &TraceRow) -> String {
    format!(
        "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{}",
        r.iter, r.component_evals, r.matvec_ops, r.gap_avg, r.gap_last, r.residual, r.elapsed_ms
    )
}

pub fn rows_to_csv(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    let _ = writeln!(s, "{CSV_HEADER}");
    for r in rows {
        let _ = writeln!(s, "{}", format_row(r));
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("unexpected header `{h}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "empty trace".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line: lno,
                column: 1,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let col_of = |k: usize| fields[..k].iter().map(|f| f.len() + 1).sum::<usize>() + 1;
        let int = |k: usize| -> Result<u64> {
            fields[k].trim().parse().map_err(|e| Error::Parse {
                line: lno,
                column: col_of(k),
                message: format!("bad integer `{}`: {e}", fields[k]),
            })
        };
        let float = |k: usize| -> Result<f64> {
            fields[k].trim().parse().map_err(|e| Error::Parse {
                line: lno,
                column: col_of(k),
                message: format!("bad number `{}`: {e}", fields[k]),
            })
        };
        rows.push(TraceRow {
            iter: int(0)?,
            component_evals: int(1)?,
            matvec_ops: float(2)?,
            gap_avg: float(3)?,
            gap_last: float(4)?,
            residual: float(5)?,
            elapsed_ms: int(6)?,
        });
    }
    Ok(rows)
}

/// First point where `gap_avg <= eps`, in matvec operations. The crossing
/// between the last row above and the first row below the target is
/// interpolated linearly in `ln(gap)`.
pub fn ops_to_target(rows: &[TraceRow], eps: f64) -> Option<f64> {
    let idx = rows.iter().position(|r| r.gap_avg <= eps)?;
    let hit = &rows[idx];
    if idx == 0 || hit.gap_avg <= 0.0 {
        return Some(hit.matvec_ops);
    }
    let prev = &rows[idx - 1];
    let (g0, g1) = (prev.gap_avg.ln(), hit.gap_avg.ln());
    if !(g0 > g1) {
        return Some(hit.matvec_ops);
    }
    let t = ((g0 - eps.ln()) / (g0 - g1)).clamp(0.0, 1.0);
    Some(prev.matvec_ops + t * (hit.matvec_ops - prev.matvec_ops))
}
