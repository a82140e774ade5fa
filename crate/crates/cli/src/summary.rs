//! Ops-to-target tables over one or more traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vibench_core::metrics::slope_estimate;
use vibench_core::trace::{ops_to_target, parse_csv};
use vibench_core::TraceRow;

use crate::error::{CliError, Result};
use crate::experiment::RunSidecar;

/// Identity of one run within an experiment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunLabel {
    pub solver: String,
    pub batch: usize,
    pub seed: u64,
}

impl RunLabel {
    /// `<solver>_b<b>_s<seed>`
    pub fn file_stem(&self) -> String {
        format!("{}_b{}_s{}", self.solver, self.batch, self.seed)
    }

    /// Inverse of [`RunLabel::file_stem`].
    pub fn from_file_stem(stem: &str) -> Option<Self> {
        let (rest, seed) = stem.rsplit_once("_s")?;
        let (solver, batch) = rest.rsplit_once("_b")?;
        Some(Self {
            solver: solver.to_string(),
            batch: batch.parse().ok()?,
            seed: seed.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub label: RunLabel,
    pub rows: Vec<TraceRow>,
    pub source: PathBuf,
}

/// Reads a trace CSV. The label comes from the `.json` sidecar when present,
/// otherwise from the file name.
pub fn load_trace(path: &Path) -> Result<TraceEntry> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let rows = parse_csv(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let sidecar = path.with_extension("json");
    let label = match std::fs::read_to_string(&sidecar) {
        Ok(json) => {
            let meta: RunSidecar = serde_json::from_str(&json)
                .map_err(|e| CliError::Parse(format!("{}: {e}", sidecar.display())))?;
            RunLabel {
                solver: meta.metadata.solver,
                batch: meta.metadata.batch,
                seed: meta.metadata.seed,
            }
        }
        Err(_) => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            RunLabel::from_file_stem(stem).unwrap_or(RunLabel {
                solver: stem.to_string(),
                batch: 0,
                seed: 0,
            })
        }
    };
    Ok(TraceEntry {
        label,
        rows,
        source: path.to_path_buf(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(flatten)]
    pub label: RunLabel,
    pub source: String,
    /// Interpolated matvec operations until `gap_avg <= eps`.
    pub ops_to_target: Option<f64>,
    /// Operations spent by the end of the trace.
    pub budget: f64,
    pub final_iter: u64,
    pub final_gap: Option<f64>,
    /// Log-log slope over the last decade of iterations.
    pub trailing_slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    /// `None` for an empty sample. The median of an even sample is the
    /// midpoint of the two central values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub solver: String,
    pub batch: usize,
    pub runs: usize,
    pub reached: usize,
    /// Over the runs that reached the target.
    pub ops_to_target: Option<Spread>,
    pub final_gap: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub eps: f64,
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
}

fn trailing_slope(rows: &[TraceRow]) -> Option<f64> {
    let last = rows.last()?.iter;
    slope_estimate(rows, last / 10, last).ok()
}

pub fn summarize_run(entry: &TraceEntry, eps: f64) -> RunSummary {
    let last = entry.rows.last();
    RunSummary {
        label: entry.label.clone(),
        source: entry.source.display().to_string(),
        ops_to_target: ops_to_target(&entry.rows, eps),
        budget: last.map_or(0.0, |r| r.matvec_ops),
        final_iter: last.map_or(0, |r| r.iter),
        final_gap: last.map(|r| r.gap_avg),
        trailing_slope: trailing_slope(&entry.rows),
    }
}

/// Per-run rows plus min/median/max across seeds for each (solver, b).
pub fn summarize(entries: &[TraceEntry], eps: f64) -> SummaryTable {
    let runs: Vec<RunSummary> = entries.iter().map(|e| summarize_run(e, eps)).collect();
    let mut groups: BTreeMap<(String, usize), Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.label.solver.clone(), r.label.batch)).or_default().push(r);
    }
    let groups = groups
        .into_iter()
        .map(|((solver, batch), rs)| {
            let ops: Vec<f64> = rs.iter().filter_map(|r| r.ops_to_target).collect();
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.final_gap).collect();
            GroupSummary {
                solver,
                batch,
                runs: rs.len(),
                reached: ops.len(),
                ops_to_target: Spread::of(&ops),
                final_gap: Spread::of(&gaps),
            }
        })
        .collect();
    SummaryTable { eps, runs, groups }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

/// Aligned plain-text rendering.
pub fn render_text(t: &SummaryTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "target gap {:.3e}", t.eps);
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>10} {:>28} {:>12} {:>10}",
        "solver", "b", "seed", "ops-to-target", "final-gap", "slope"
    );
    for r in &t.runs {
        let ops = match r.ops_to_target {
            Some(o) => format!("{o:.4e}"),
            None => format!("not reached (budget {:.4e})", r.budget),
        };
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>10} {:>28} {:>12} {:>10}",
            r.label.solver,
            r.label.batch,
            r.label.seed,
            ops,
            fmt_opt(r.final_gap),
            r.trailing_slope.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>8} {:>12} {:>12} {:>12}",
        "solver", "b", "reached", "ops-min", "ops-median", "ops-max"
    );
    for g in &t.groups {
        let o = g.ops_to_target;
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>8} {:>12} {:>12} {:>12}",
            g.solver,
            g.batch,
            format!("{}/{}", g.reached, g.runs),
            fmt_opt(o.map(|x| x.min)),
            fmt_opt(o.map(|x| x.median)),
            fmt_opt(o.map(|x| x.max))
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(seed: u64, scale: f64) -> TraceEntry {
        let rows = (1..=100)
            .map(|i| {
                let k = i * 20;
                TraceRow {
                    iter: k,
                    component_evals: k,
                    matvec_ops: k as f64,
                    gap_avg: scale / k as f64,
                    gap_last: scale / k as f64,
                    residual: 0.0,
                    elapsed_ms: 0,
                }
            })
            .collect();
        TraceEntry {
            label: RunLabel {
                solver: "ommb".into(),
                batch: 1,
                seed,
            },
            rows,
            source: PathBuf::from(format!("s{seed}.csv")),
        }
    }

    #[test]
    fn one_over_k_hits_at_thousand() {
        let t = summarize(&[synthetic(0, 1.0)], 1e-3);
        let ops = t.runs[0].ops_to_target.unwrap();
        assert!((ops - 1000.0).abs() < 1e-9, "{ops}");
        assert!((t.runs[0].trailing_slope.unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_seed_median_is_midpoint() {
        let t = summarize(&[synthetic(0, 1.0), synthetic(1, 2.0)], 1e-3);
        let g = &t.groups[0];
        assert_eq!(g.runs, 2);
        let s = g.ops_to_target.unwrap();
        assert!((s.median - 0.5 * (s.min + s.max)).abs() < 1e-9);
        assert!((s.min - 1000.0).abs() < 1e-9 && (s.max - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn unreached_reports_budget() {
        let t = summarize(&[synthetic(0, 1.0)], 1e-9);
        assert!(render_text(&t).contains("not reached (budget 2.0000e3)"));
    }

    #[test]
    fn stems_round_trip() {
        let l = RunLabel {
            solver: "my_solver".into(),
            batch: 16,
            seed: 3,
        };
        assert_eq!(RunLabel::from_file_stem(&l.file_stem()), Some(l));
        assert_eq!(RunLabel::from_file_stem("plain"), None);
    }
}
