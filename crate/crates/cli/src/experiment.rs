//! Expands a config into runs, executes them and writes the artifacts.
//!
//! Runs are enumerated solver-major, then batch, then seed; a run's index in
//! that order feeds its generator as `seed ^ index`. Deterministic baselines
//! ignore the batch sweep and run once per seed with `b = M`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vibench_core::game::{generate_matrix, load_matrix};
use vibench_core::params::{tune_oracle_optimal, tune_params, MAX_THEOREM_GAMMA};
use vibench_core::solvers::{run_solver, StopReason};
use vibench_core::trace::{rows_to_csv, CSV_SCHEMA_VERSION};
use vibench_core::{
    GeneratorSpec, Matrix, MatrixGame, Problem, Rng, RunMetadata, RunOptions, SolverParams, SolverRegistry,
    StopCriteria, TraceRow,
};

use crate::config::{ExperimentConfig, ProblemConfig, SolverConfig, TuningMode};
use crate::error::{CliError, Result};
use crate::summary::{summarize, RunLabel, SummaryTable, TraceEntry};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

/// A game instance with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub game: Arc<MatrixGame>,
    pub problem: Problem,
    /// 16 hex digits.
    pub digest: String,
    pub source: String,
}

impl LoadedProblem {
    pub fn from_matrix(a: Matrix, source: String) -> Result<Self> {
        let digest = format!("{:016x}", a.digest());
        let game = Arc::new(MatrixGame::new(a)?);
        let problem = game.to_problem()?;
        Ok(Self {
            game,
            problem,
            digest,
            source,
        })
    }
}

pub fn load_problem(cfg: &ProblemConfig) -> Result<LoadedProblem> {
    match &cfg.matrix {
        Some(path) => {
            let a = load_matrix(path).map_err(|e| match e {
                vibench_core::Error::Io(io) => CliError::io(path, io),
                other => CliError::config(format!("problem.matrix: {}: {other}", path.display())),
            })?;
            LoadedProblem::from_matrix(a, path.display().to_string())
        }
        None => {
            let spec = GeneratorSpec {
                kind: cfg.kind,
                dim: cfg.dim,
                seed: cfg.seed,
                theta: cfg.theta,
            };
            let a = generate_matrix(&spec).map_err(|e| CliError::config(format!("problem: {e}")))?;
            LoadedProblem::from_matrix(a, format!("{} d={} seed={}", cfg.kind, cfg.dim, cfg.seed))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub index: usize,
    pub label: RunLabel,
}

impl RunSpec {
    /// `seed ^ x` with `x` the first output of the generator seeded by the
    /// run index. A raw `seed ^ index` maps (seed 0, run 0) and
    /// (seed 1, run 1) to the same stream.
    pub fn stream_seed(&self) -> u64 {
        self.label.seed ^ Rng::seed_from_u64(self.index as u64).next_u64()
    }
}

/// Solvers that always evaluate the full operator.
pub fn is_full_operator(name: &str) -> bool {
    matches!(name, "eg" | "popov")
}

pub fn plan(cfg: &ExperimentConfig, registry: &SolverRegistry, num_components: usize) -> Result<Vec<RunSpec>> {
    for (i, &b) in cfg.run.batches.iter().enumerate() {
        if b > num_components {
            return Err(CliError::config(format!(
                "run.batches[{i}]: {b} exceeds the number of components {num_components}"
            )));
        }
    }
    let mut specs = Vec::new();
    for (si, name) in cfg.run.solvers.iter().enumerate() {
        if !registry.contains(name) {
            return Err(CliError::config(format!(
                "run.solvers[{si}]: unknown solver `{name}` (registered: {})",
                registry.names().join(", ")
            )));
        }
        let batches: Vec<usize> = if is_full_operator(name) {
            vec![num_components]
        } else {
            cfg.run.batches.clone()
        };
        for &batch in &batches {
            for &seed in &cfg.run.seeds {
                specs.push(RunSpec {
                    index: specs.len(),
                    label: RunLabel {
                        solver: name.clone(),
                        batch,
                        seed,
                    },
                });
            }
        }
    }
    Ok(specs)
}

/// Parameters, clamp flag, large-batch flag and warnings for one run.
pub fn solver_params(cfg: &ExperimentConfig, spec: &RunSpec, p: &Problem) -> Result<(SolverParams, bool, bool, Vec<String>)> {
    let name = spec.label.solver.as_str();
    let sc = cfg.solvers.get(name).cloned().unwrap_or_default();
    let field = |k: &str| format!("solvers.{name}.{k}");
    let lip = p.lipschitz();
    let m = p.num_components();
    let b = spec.label.batch;
    let max_iters = cfg.stop.max_iters.unwrap_or(u64::MAX);
    let seed = spec.stream_seed();
    let mut warnings = Vec::new();

    // every solver other than OMMB takes a plain step size
    if name != "ommb" {
        let default = if name == "popov" { 0.25 } else { 0.5 } / lip.l;
        let eta = sc.eta.unwrap_or(default);
        if !(eta.is_finite() && eta > 0.0) {
            return Err(CliError::config(format!("{}: no usable step size (L = {})", field("eta"), lip.l)));
        }
        let mut params = SolverParams::deterministic(eta, max_iters);
        params.seed = seed;
        params.batch = b;
        return Ok((params, false, false, warnings));
    }

    if !(lip.l > 0.0 && lip.l_bar > 0.0) {
        return Err(CliError::config(format!(
            "problem: theorem tuning needs positive L and L_bar, got {} and {}",
            lip.l, lip.l_bar
        )));
    }
    let SolverConfig {
        tuning,
        eta,
        gamma,
        prob,
        ..
    } = sc;
    let (mut params, clamped, large) = match tuning {
        TuningMode::OracleOptimal => {
            let t = tune_oracle_optimal(lip.l, lip.l_bar, b, m)?;
            let (c, l) = (t.clamped, t.large_batch);
            (t.into_params(max_iters, seed), c, l)
        }
        TuningMode::Theorem => {
            let g = gamma.unwrap_or(MAX_THEOREM_GAMMA);
            let t = tune_params(lip.l, lip.l_bar, b, g, m).map_err(|e| CliError::config(format!("{}: {e}", field("gamma"))))?;
            let l = t.large_batch;
            (t.into_params(max_iters, seed), false, l)
        }
        TuningMode::Manual => {
            let g = gamma.or(prob).unwrap_or(b as f64 / m as f64);
            let params = SolverParams {
                eta: eta.unwrap_or(0.0),
                gamma: g,
                prob: prob.unwrap_or(g),
                batch: b,
                max_iters,
                op_budget: None,
                seed,
                sampling: Default::default(),
            };
            (params, false, false)
        }
    };
    if tuning != TuningMode::Manual {
        if let Some(e) = eta {
            params.eta = e;
            warnings.push("eta overridden; outside the theorem's step-size rule".into());
        }
    }
    params.op_budget = cfg.stop.max_ops;
    params
        .validate(m)
        .map_err(|e| CliError::config(format!("solvers.{name}: {e}")))?;
    if clamped {
        warnings.push(format!("gamma = b/M clamped to {MAX_THEOREM_GAMMA}"));
    }
    if large {
        warnings.push("b exceeds L_bar sqrt(M) / L; the b L / eps term dominates".into());
    }
    if !params.is_theorem_mode() {
        warnings.push("parameters outside the theorem's regime".into());
    }
    Ok((params, clamped, large, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed { reason: StopReason, reached_target: bool },
    Diverged { iteration: u64, reason: String },
    Failed { message: String },
}

/// Contents of the `.json` file written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub metadata: RunMetadata,
    #[serde(flatten)]
    pub status: RunStatus,
    pub iterations: u64,
    pub refreshes: u64,
    pub matvec_ops: f64,
    pub final_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub sidecar: RunSidecar,
    pub rows: Vec<TraceRow>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.sidecar.status, RunStatus::Diverged { .. })
    }

    pub fn failed(&self) -> bool {
        !matches!(self.sidecar.status, RunStatus::Completed { .. })
    }
}

pub fn execute_run(cfg: &ExperimentConfig, lp: &LoadedProblem, spec: &RunSpec, registry: &SolverRegistry) -> RunRecord {
    let p = &lp.problem;
    let mut metadata = RunMetadata {
        schema_version: CSV_SCHEMA_VERSION,
        solver: spec.label.solver.clone(),
        batch: spec.label.batch,
        seed: spec.label.seed,
        stream_seed: spec.stream_seed(),
        problem_digest: lp.digest.clone(),
        dim: p.dim(),
        num_components: p.num_components(),
        ..RunMetadata::default()
    };
    let fail = |metadata: RunMetadata, message: String| RunRecord {
        spec: spec.clone(),
        sidecar: RunSidecar {
            metadata,
            status: RunStatus::Failed { message },
            iterations: 0,
            refreshes: 0,
            matvec_ops: 0.0,
            final_gap: None,
        },
        rows: Vec::new(),
    };

    let (params, clamped, large, warnings) = match solver_params(cfg, spec, p) {
        Ok(v) => v,
        Err(e) => return fail(metadata, e.to_string()),
    };
    metadata.eta = params.eta;
    metadata.gamma = params.gamma;
    metadata.prob = params.prob;
    metadata.clamped = clamped;
    metadata.large_batch_warning = large;
    metadata.warnings = warnings;
    for w in &metadata.warnings {
        warn!("{}: {w}", spec.label.file_stem());
    }

    let cache_check = cfg.solvers.get(&spec.label.solver).is_some_and(|s| s.cache_check);
    let x0 = p.default_start();
    let built = if cache_check && spec.label.solver == "ommb" {
        vibench_core::solvers::Ommb::new(p.clone(), params.clone(), &x0)
            .map(|s| Box::new(s.with_cache_validation(true)) as Box<dyn vibench_core::Solver>)
    } else {
        registry.build(&spec.label.solver, p, &params, &x0)
    };
    let mut solver = match built {
        Ok(s) => s,
        Err(e) => return fail(metadata, e.to_string()),
    };

    let stop = StopCriteria {
        max_iters: params.max_iters,
        max_ops: cfg.stop.max_ops,
        target_gap: cfg.stop.eps,
    };
    let opts = RunOptions::new(stop).cadence(cfg.run.cadence).record_time(cfg.run.record_time);
    let mut rng = Rng::seed_from_u64(params.seed);
    let result = run_solver(solver.as_mut(), p, Some(&*lp.game), &opts, &mut rng, None);
    match result {
        Ok(out) => {
            info!(
                "{}: {} iterations, {:.1} ops, gap {:.3e}",
                spec.label.file_stem(),
                out.iterations,
                out.account.matvec_ops(),
                out.rows.last().map_or(f64::NAN, |r| r.gap_avg)
            );
            RunRecord {
                spec: spec.clone(),
                sidecar: RunSidecar {
                    metadata,
                    status: RunStatus::Completed {
                        reason: out.reason,
                        reached_target: out.reached_target,
                    },
                    iterations: out.iterations,
                    refreshes: out.refreshes,
                    matvec_ops: out.account.matvec_ops(),
                    final_gap: out.rows.last().map(|r| r.gap_avg),
                },
                rows: out.rows,
            }
        }
        Err(vibench_core::Error::Diverged { iteration, reason, .. }) => {
            warn!("{}: diverged at iteration {iteration}: {reason}", spec.label.file_stem());
            RunRecord {
                spec: spec.clone(),
                sidecar: RunSidecar {
                    metadata,
                    status: RunStatus::Diverged { iteration, reason },
                    iterations: iteration,
                    refreshes: 0,
                    matvec_ops: 0.0,
                    final_gap: None,
                },
                rows: Vec::new(),
            }
        }
        Err(e) => fail(metadata, e.to_string()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemInfo {
    pub source: String,
    pub digest: String,
    pub dim: usize,
    pub num_components: usize,
    pub lipschitz: f64,
    pub lipschitz_bar: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub problem: ProblemInfo,
    pub records: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn entries(&self) -> Vec<TraceEntry> {
        self.records
            .iter()
            .map(|r| TraceEntry {
                label: r.spec.label.clone(),
                rows: r.rows.clone(),
                source: PathBuf::from(format!("{}.csv", r.spec.label.file_stem())),
            })
            .collect()
    }

    pub fn divergences(&self) -> usize {
        self.records.iter().filter(|r| r.diverged()).count()
    }
}

/// Runs every planned run on a pool of `cfg.run.jobs` workers. Results come
/// back in plan order regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, registry: &SolverRegistry) -> Result<ExperimentReport> {
    cfg.validate()?;
    let lp = load_problem(&cfg.problem)?;
    let specs = plan(cfg, registry, lp.problem.num_components())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.jobs)
        .build()
        .map_err(|e| CliError::config(format!("run.jobs: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| specs.par_iter().map(|s| execute_run(cfg, &lp, s, registry)).collect());
    let lip = lp.problem.lipschitz();
    Ok(ExperimentReport {
        problem: ProblemInfo {
            source: lp.source.clone(),
            digest: lp.digest.clone(),
            dim: lp.problem.dim(),
            num_components: lp.problem.num_components(),
            lipschitz: lip.l,
            lipschitz_bar: lip.l_bar,
        },
        records,
    })
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut it = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if it.next().is_some() && !force {
            return Err(CliError::config(format!(
                "output directory {} is not empty (pass --force to reuse it)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary<'a> {
    pub problem: &'a ProblemInfo,
    pub runs: Vec<&'a RunSidecar>,
    pub table: Option<SummaryTable>,
}

/// One CSV and one sidecar per run, `summary.json` and the effective config.
pub fn write_outputs(cfg: &ExperimentConfig, report: &ExperimentReport, dir: &Path) -> Result<()> {
    for r in &report.records {
        let stem = r.spec.label.file_stem();
        write(dir.join(format!("{stem}.csv")), &rows_to_csv(&r.rows))?;
        let json = serde_json::to_string_pretty(&r.sidecar).expect("sidecar serializes");
        write(dir.join(format!("{stem}.json")), &json)?;
    }
    let summary = ExperimentSummary {
        problem: &report.problem,
        runs: report.records.iter().map(|r| &r.sidecar).collect(),
        table: cfg.stop.eps.map(|eps| summarize(&report.entries(), eps)),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(dir.join(SUMMARY_FILE), &json)?;
    write(dir.join(CONFIG_ECHO_FILE), &cfg.to_toml())
}
