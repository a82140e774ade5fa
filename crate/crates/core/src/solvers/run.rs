use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{residual_metric, GapMeasure, OpAccount};
use crate::params::SolverParams;
use crate::rng::Rng;
use crate::trace::TraceRow;
use crate::vi::Problem;

use super::ommb::Ommb;
use super::state::StepRecord;
use super::Solver;

/// The first criterion met ends the run. The target gap is only checked on
/// trace rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopCriteria {
    pub max_iters: u64,
    pub max_ops: Option<f64>,
    pub target_gap: Option<f64>,
}

impl StopCriteria {
    pub fn iterations(max_iters: u64) -> Self {
        Self {
            max_iters,
            max_ops: None,
            target_gap: None,
        }
    }

    pub fn from_params(params: &SolverParams) -> Self {
        Self {
            max_iters: params.max_iters,
            max_ops: params.op_budget,
            target_gap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    pub stop: StopCriteria,
    /// A row is recorded every `cadence` iterations and once at the end.
    pub cadence: u64,
    /// When false `elapsed_ms` is written as 0, making traces byte-stable.
    pub record_time: bool,
}

impl RunOptions {
    pub const DEFAULT_CADENCE: u64 = 100;

    pub fn new(stop: StopCriteria) -> Self {
        Self {
            stop,
            cadence: Self::DEFAULT_CADENCE,
            record_time: true,
        }
    }

    pub fn cadence(mut self, cadence: u64) -> Self {
        self.cadence = cadence.max(1);
        self
    }

    pub fn record_time(mut self, on: bool) -> Self {
        self.record_time = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIters,
    OpBudget,
    TargetGap,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub rows: Vec<TraceRow>,
    /// Ergodic average; the returned solution.
    pub average: Vec<f64>,
    pub last: Vec<f64>,
    pub iterations: u64,
    pub refreshes: u64,
    pub account: OpAccount,
    pub reached_target: bool,
    pub reason: StopReason,
}

#[cfg(not(target_arch = "wasm32"))]
struct Clock(Option<std::time::Instant>);

#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    fn start(on: bool) -> Self {
        Self(on.then(std::time::Instant::now))
    }

    fn ms(&self) -> u64 {
        self.0.map_or(0, |t| t.elapsed().as_millis() as u64)
    }
}

#[cfg(target_arch = "wasm32")]
struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    fn start(_on: bool) -> Self {
        Clock
    }

    fn ms(&self) -> u64 {
        0
    }
}

/// Row for the solver's current state. Measurement work is not charged to
/// the account. Without a closed-form gap both gap columns carry the
/// prox-gradient residual.
fn make_row(solver: &dyn Solver, problem: &Problem, measure: Option<&dyn GapMeasure>, clock: &Clock) -> Result<TraceRow> {
    let avg = solver.average();
    let last = solver.last_iterate();
    let residual = residual_metric(problem, last, solver.eta());
    let (gap_avg, gap_last) = match measure {
        Some(m) => (m.gap(&avg)?, m.gap(last)?),
        None => (residual_metric(problem, &avg, solver.eta()), residual),
    };
    let account = solver.account();
    Ok(TraceRow {
        iter: solver.iteration(),
        component_evals: account.component_evals,
        matvec_ops: account.matvec_ops(),
        gap_avg,
        gap_last,
        residual,
        elapsed_ms: clock.ms(),
    })
}

/// Drives `solver` until a stop criterion fires. `hook` sees every step
/// record on the calling thread. Divergence aborts the run with the error.
pub fn run_solver(
    solver: &mut dyn Solver,
    problem: &Problem,
    measure: Option<&dyn GapMeasure>,
    opts: &RunOptions,
    rng: &mut Rng,
    mut hook: Option<&mut dyn FnMut(&StepRecord)>,
) -> Result<RunOutcome> {
    let clock = Clock::start(opts.record_time);
    let cadence = opts.cadence.max(1);
    let stop = opts.stop;
    let mut rows = Vec::new();
    let mut reason = StopReason::MaxIters;
    let mut reached_target = false;

    loop {
        let k = solver.iteration();
        if k >= stop.max_iters {
            break;
        }
        if stop.max_ops.is_some_and(|b| solver.account().matvec_ops() >= b) {
            reason = StopReason::OpBudget;
            break;
        }
        let rec = solver.step(rng)?;
        if let Some(h) = hook.as_mut() {
            h(rec);
        }
        let k = solver.iteration();
        if k.is_multiple_of(cadence) {
            let row = make_row(solver, problem, measure, &clock)?;
            rows.push(row);
            if stop.target_gap.is_some_and(|eps| row.gap_avg <= eps) {
                reached_target = true;
                reason = StopReason::TargetGap;
                break;
            }
        }
    }

    let k = solver.iteration();
    if k > 0 && rows.last().is_none_or(|r| r.iter != k) {
        let row = make_row(solver, problem, measure, &clock)?;
        reached_target |= stop.target_gap.is_some_and(|eps| row.gap_avg <= eps);
        rows.push(row);
    }

    Ok(RunOutcome {
        rows,
        average: solver.average(),
        last: solver.last_iterate().to_vec(),
        iterations: k,
        refreshes: solver.refreshes(),
        account: solver.account(),
        reached_target,
        reason,
    })
}

/// OMMB from the problem's default start with the generator seeded from
/// `params.seed`.
pub fn run_ommb(
    problem: &Problem,
    params: &SolverParams,
    measure: Option<&dyn GapMeasure>,
    opts: &RunOptions,
    hook: Option<&mut dyn FnMut(&StepRecord)>,
) -> Result<RunOutcome> {
    let mut solver = Ommb::new(problem.clone(), params.clone(), &problem.default_start())?;
    let mut rng = Rng::seed_from_u64(params.seed);
    run_solver(&mut solver, problem, measure, opts, &mut rng, hook)
}
