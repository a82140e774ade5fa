//! Two-column `(matvec_ops, gap_avg)` files for external plotting tools.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::summary::TraceEntry;

/// Gaps at or below zero are written as this value so log axes work.
pub const GAP_FLOOR: f64 = 1e-300;

/// One `<solver>_b<k>.dat` per (solver, batch). Each seed is a block
/// introduced by a `# seed S` comment; blocks are separated by two blank
/// lines.
pub fn render_plot_files(entries: &[TraceEntry]) -> BTreeMap<String, String> {
    let mut groups: BTreeMap<String, Vec<&TraceEntry>> = BTreeMap::new();
    for e in entries {
        groups
            .entry(format!("{}_b{}.dat", e.label.solver, e.label.batch))
            .or_default()
            .push(e);
    }
    groups
        .into_iter()
        .map(|(name, mut es)| {
            es.sort_by_key(|e| e.label.seed);
            let mut s = String::from("# matvec_ops gap_avg\n");
            for (i, e) in es.iter().enumerate() {
                if i > 0 {
                    s.push_str("\n\n");
                }
                let _ = writeln!(s, "# seed {}", e.label.seed);
                for r in &e.rows {
                    let _ = writeln!(s, "{:.9e} {:.9e}", r.matvec_ops, r.gap_avg.max(GAP_FLOOR));
                }
            }
            (name, s)
        })
        .collect()
}

pub fn write_plot_files(entries: &[TraceEntry], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in render_plot_files(entries) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
