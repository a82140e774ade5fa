//! Iterative solvers behind a common stepping interface.

mod baselines;
mod ommb;
mod registry;
mod run;
mod state;

pub use baselines::{ExtraGradient, Popov};
pub use ommb::{delta_estimator, Batch, Ommb};
pub use registry::{SolverFactory, SolverRegistry};
pub use run::{run_ommb, run_solver, RunOptions, RunOutcome, StopCriteria, StopReason};
pub use state::{SolverState, StepRecord};

use crate::error::Result;
use crate::metrics::OpAccount;
use crate::rng::Rng;

/// Iterates with `|x| > DIVERGENCE_NORM` are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// One iterative method with its owned state.
pub trait Solver: Send {
    fn name(&self) -> &str;

    /// Advances one iteration. Deterministic methods ignore `rng`.
    fn step(&mut self, rng: &mut Rng) -> Result<&StepRecord>;

    fn iteration(&self) -> u64;

    fn last_iterate(&self) -> &[f64];

    /// Ergodic average of the iterates produced so far; the starting point
    /// before the first step.
    fn average(&self) -> Vec<f64>;

    fn account(&self) -> OpAccount;

    fn refreshes(&self) -> u64 {
        0
    }

    /// Step size, used for the residual diagnostic.
    fn eta(&self) -> f64;
}
