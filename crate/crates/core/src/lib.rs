//! Solvers and benchmark building blocks for monotone stochastic finite-sum
//! variational inequalities.
//!
//! The problem is: find `z*` in `dom g` such that
//! `<F(z*), z - z*> + g(z) - g(z*) >= 0` for every `z`, where
//! `F = (1/M) * sum_j F_j` is a monotone finite-sum operator and `g` is a
//! prox-friendly convex function.
//!
//! The centrepiece is [`solvers::Ommb`], an optimistic method with negative
//! momentum, mini-batching and a loopless (probabilistically refreshed)
//! snapshot. Deterministic ExtraGradient and Popov baselines live next to it
//! behind the common [`solvers::Solver`] trait.
//!
//! Component indices are zero-based throughout the API.

pub mod error;
pub mod game;
pub mod linalg;
pub mod metrics;
pub mod params;
pub mod prox;
pub mod rng;
pub mod solvers;
pub mod trace;
pub mod vi;

pub use error::{Error, Result};
pub use game::{GeneratorKind, GeneratorSpec, Matrix, MatrixGame};
pub use metrics::{GapMeasure, OpAccount};
pub use params::{SamplingMode, SolverParams, Tuning};
pub use prox::{Regularizer, SimplexDomain};
pub use rng::Rng;
pub use solvers::{RunOptions, RunOutcome, Solver, SolverRegistry, StepRecord, StopCriteria};
pub use trace::{RunMetadata, RunTrace, TraceRow};
pub use vi::{LipschitzData, Operator, Problem};
