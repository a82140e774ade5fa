use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vibench_core::game::{generate_matrix, save_matrix};
use vibench_core::metrics::{game_duality_gap, gap_lower_witness};
use vibench_core::vi::verify_problem;
use vibench_core::{GeneratorKind, GeneratorSpec, LipschitzData, Rng, SolverRegistry};

use crate::config::{ExperimentConfig, Overrides, ProblemConfig};
use crate::error::{CliError, Result};
use crate::experiment::{load_problem, prepare_out_dir, run_experiment, write_outputs};
use crate::plot::write_plot_files;
use crate::summary::{load_trace, render_text, summarize};

#[derive(Debug, Parser)]
#[command(name = "vibench", version, about = "Benchmarks for variance-reduced VI solvers on matrix games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every (solver, batch, seed) combination and write traces.
    Run(RunArgs),
    /// Generate a test matrix and save it as text.
    Gen(GenArgs),
    /// Check operator, Lipschitz and gap invariants of a game.
    Verify(VerifyArgs),
    /// Ops-to-target table over trace files.
    Summarize(SummarizeArgs),
    /// Two-column (matvec_ops, gap) files per solver and batch size.
    Plotdata(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub solver: Option<Vec<String>>,
    #[arg(long)]
    pub kind: Option<GeneratorKind>,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub batch: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_ops: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<u64>,
    #[arg(long)]
    pub cadence: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Write elapsed_ms as 0 so traces are byte-identical across runs.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "policeman-burglar")]
    pub kind: GeneratorKind,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = vibench_core::game::DEFAULT_THETA)]
    pub theta: f64,
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "seeded-gaussian")]
    pub kind: GeneratorKind,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = vibench_core::game::DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub probes: usize,
    /// Debug aid: declare L_bar and every L_j at half their true value.
    #[arg(long, hide = true)]
    pub halve_lbar: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => cmd_run(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        kind: a.kind,
        matrix: a.matrix,
        solvers: a.solver,
        dim: a.dim,
        batches: a.batch,
        seeds: a.seed,
        eps: a.eps,
        max_ops: a.max_ops,
        max_iters: a.max_iters,
        cadence: a.cadence,
        out: a.out,
        jobs: a.jobs,
        no_timing: a.no_timing,
    });
    cfg.validate()?;
    let registry = SolverRegistry::with_builtins();
    // fail on names before touching the output directory
    for (i, name) in cfg.run.solvers.iter().enumerate() {
        if !registry.contains(name) {
            return Err(CliError::config(format!(
                "run.solvers[{i}]: unknown solver `{name}` (registered: {})",
                registry.names().join(", ")
            )));
        }
    }
    prepare_out_dir(&cfg.run.out, a.force)?;
    let report = run_experiment(&cfg, &registry)?;
    write_outputs(&cfg, &report, &cfg.run.out)?;
    if let Some(eps) = cfg.stop.eps {
        print!("{}", render_text(&summarize(&report.entries(), eps)));
    }
    for r in report.records.iter().filter(|r| r.failed()) {
        eprintln!("{}: {:?}", r.spec.label.file_stem(), r.sidecar.status);
    }
    match report.divergences() {
        0 if report.records.iter().any(|r| r.failed()) => Err(CliError::config("some runs could not be set up")),
        0 => Ok(()),
        count => Err(CliError::Diverged { count }),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let spec = GeneratorSpec {
        kind: a.kind,
        dim: a.dim,
        seed: a.seed,
        theta: a.theta,
    };
    let m = generate_matrix(&spec).map_err(|e| CliError::config(e.to_string()))?;
    save_matrix(&m, &a.path).map_err(|e| match e {
        vibench_core::Error::Io(io) => CliError::io(&a.path, io),
        other => other.into(),
    })?;
    let lp = crate::experiment::LoadedProblem::from_matrix(m, a.path.display().to_string())?;
    let lip = lp.problem.lipschitz();
    println!("d={} sigma_max={:.10e} L_bar={:.10e} digest={}", a.dim, lip.l, lip.l_bar, lp.digest);
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let lp = load_problem(&ProblemConfig {
        kind: a.kind,
        dim: a.dim,
        seed: a.seed,
        theta: a.theta,
        matrix: a.matrix.clone(),
    })?;
    let mut problem = lp.problem.clone();
    if a.halve_lbar {
        let l = problem.lipschitz();
        let per = l.per_component.iter().map(|v| 0.5 * v).collect();
        problem = problem.with_lipschitz(LipschitzData::from_parts_unchecked(l.l, per, 0.5 * l.l_bar));
    }
    let report = verify_problem(&problem, a.probes, a.seed);
    print!("{report}");

    // closed-form gap against the vertex witness, and weak duality
    let d = lp.game.size();
    let mut rng = Rng::seed_from_u64(a.seed ^ 0x9a9);
    let mut worst_gap_diff = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for _ in 0..a.probes.max(1) {
        let z = problem.prox(1.0, &rng.normal_vec(2 * d));
        let g = game_duality_gap(&lp.game, &z)?;
        let w = gap_lower_witness(&lp.game, &z)?;
        worst_gap_diff = worst_gap_diff.max((g - w.bound).abs());
        min_gap = min_gap.min(g);
    }
    let gap_ok = worst_gap_diff <= 1e-12 * (1.0 + lp.problem.lipschitz().l);
    let dual_ok = min_gap >= -1e-10;
    println!(
        "{:<4} gap-consistency      worst=|closed form - vertex witness| {worst_gap_diff:.3e}",
        if gap_ok { "ok" } else { "FAIL" }
    );
    println!(
        "{:<4} gap-nonnegativity    worst={min_gap:.3e}",
        if dual_ok { "ok" } else { "FAIL" }
    );
    if report.passed() && gap_ok && dual_ok {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}

fn load_all(files: &[PathBuf]) -> Result<Vec<crate::summary::TraceEntry>> {
    files.iter().map(|f| load_trace(f)).collect()
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    if !(a.eps.is_finite() && a.eps > 0.0) {
        return Err(CliError::config(format!("--eps: must be positive, got {}", a.eps)));
    }
    let table = summarize(&load_all(&a.files)?, a.eps);
    print!("{}", render_text(&table));
    if let Some(path) = a.json {
        let json = serde_json::to_string_pretty(&table).expect("table serializes");
        std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn cmd_plotdata(a: PlotArgs) -> Result<()> {
    for p in write_plot_files(&load_all(&a.files)?, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}
