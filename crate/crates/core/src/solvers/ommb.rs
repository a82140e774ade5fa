//! Optimistic method with negative momentum, mini-batching and a loopless
//! snapshot.
//!
//! Each iteration `k`:
//!
//! 1. draw `S^k`: `b` indices uniformly from `0..M`, with replacement;
//! 2. form the variance-reduced optimistic estimate
//!    `Δ^k = (1/b) Σ_{j∈S^k} [2F_j(x^k) − F_j(w^{k−1}) − F_j(x^{k−1})] + F(w^{k−1})`;
//! 3. `x^{k+1} = prox_{ηg}(x^k + γ(w^k − x^k) − ηΔ^k)`;
//! 4. with probability `p` set `w^{k+1} = x^{k+1}` (and pay one full
//!    evaluation to refresh the cached `F`), otherwise keep `w^k`.
//!
//! Random draws happen in a fixed order: the `b` indices, then one coin.
//! `Δ^k` is evaluated as `(2 B(x^k) − B(x^{k−1})) + (F(w^{k−1}) − B(w^{k−1}))`
//! where `B` is the batch mean; with a full pass `B = F`, the control variate
//! cancels to an exact zero, and the iteration coincides bit for bit with
//! Popov's method.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist, norm};
use crate::metrics::OpAccount;
use crate::params::{SamplingMode, SolverParams};
use crate::rng::Rng;
use crate::vi::Problem;

use super::state::{SolverState, StepRecord};
use super::{Solver, DIVERGENCE_NORM};

/// Mini-batch handed to [`delta_estimator`].
#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    /// Zero-based component indices, duplicates allowed.
    Indices(&'a [usize]),
    /// Every component once.
    FullPass,
}

#[derive(Debug, Clone)]
struct Scratch {
    bx: Vec<f64>,
    bx_prev: Vec<f64>,
    bw: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self {
            bx: vec![0.0; d],
            bx_prev: vec![0.0; d],
            bw: vec![0.0; d],
        }
    }
}

/// Writes `Δ^k` into `out` and returns the number of component evaluations
/// spent (`3b`, with a full pass counting `b = M`).
///
/// A sampled batch accumulates `(2F_j(x^k) - F_j(x^{k-1}) - F_j(w^{k-1})) / b`
/// on top of the cached `F(w^{k-1})`. A full pass evaluates the three batch
/// means through the full operator and groups the sum so that the control
/// variate cancels exactly.
fn estimate_into(problem: &Problem, state: &SolverState, batch: Batch<'_>, s: &mut Scratch, out: &mut [f64]) -> u64 {
    let op = problem.operator();
    match batch {
        Batch::Indices(idx) => {
            out.copy_from_slice(&state.f_w_prev);
            let inv = 1.0 / idx.len() as f64;
            for &j in idx {
                op.add_component(j, &state.x_curr, 2.0 * inv, out);
                op.add_component(j, &state.x_prev, -inv, out);
                op.add_component(j, &state.w_prev, -inv, out);
            }
            3 * idx.len() as u64
        }
        Batch::FullPass => {
            op.full_into(&state.x_curr, &mut s.bx);
            op.full_into(&state.x_prev, &mut s.bx_prev);
            op.full_into(&state.w_prev, &mut s.bw);
            for i in 0..out.len() {
                out[i] = (2.0 * s.bx[i] - s.bx_prev[i]) + (state.f_w_prev[i] - s.bw[i]);
            }
            3 * problem.num_components() as u64
        }
    }
}

/// The estimate `Δ^k` for an explicit batch, using the state's cached
/// `F(w^{k−1})`.
pub fn delta_estimator(problem: &Problem, state: &SolverState, batch: Batch<'_>) -> Result<Vec<f64>> {
    let m = problem.num_components();
    if let Batch::Indices(idx) = batch {
        if idx.is_empty() {
            return Err(Error::param("batch", "batch must not be empty"));
        }
        if let Some(&j) = idx.iter().find(|&&j| j >= m) {
            return Err(Error::IndexOutOfRange { index: j, count: m });
        }
    }
    let d = problem.dim();
    let mut out = vec![0.0; d];
    estimate_into(problem, state, batch, &mut Scratch::new(d), &mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Ommb {
    problem: Problem,
    params: SolverParams,
    state: SolverState,
    scratch: Scratch,
    delta: Vec<f64>,
    shifted: Vec<f64>,
    x_next: Vec<f64>,
    record: StepRecord,
    validate_cache: bool,
}

impl Ommb {
    pub fn new(problem: Problem, params: SolverParams, x0: &[f64]) -> Result<Self> {
        params.validate(problem.num_components())?;
        problem.check_dim(x0)?;
        if !problem.contains(x0) {
            return Err(Error::param("x0", "starting point must lie in dom g"));
        }
        let d = problem.dim();
        let state = SolverState::init(&problem, x0);
        Ok(Self {
            problem,
            params,
            state,
            scratch: Scratch::new(d),
            delta: vec![0.0; d],
            shifted: vec![0.0; d],
            x_next: vec![0.0; d],
            record: StepRecord::default(),
            validate_cache: false,
        })
    }

    /// Recompute `F(w^{k−1})` after every step and fail on any bit
    /// difference from the cache.
    pub fn with_cache_validation(mut self, on: bool) -> Self {
        self.validate_cache = on;
        self
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }
}

impl Solver for Ommb {
    fn name(&self) -> &str {
        "ommb"
    }

    fn step(&mut self, rng: &mut Rng) -> Result<&StepRecord> {
        let m = self.problem.num_components();
        let SolverParams {
            eta,
            gamma,
            prob,
            batch,
            sampling,
            ..
        } = self.params;

        let mut indices = std::mem::take(&mut self.record.batch);
        indices.clear();
        let batch_ref = match sampling {
            SamplingMode::Uniform => {
                indices.extend((0..batch).map(|_| rng.index(m)));
                Batch::Indices(&indices)
            }
            SamplingMode::FullPass => Batch::FullPass,
        };
        let evals = estimate_into(&self.problem, &self.state, batch_ref, &mut self.scratch, &mut self.delta);
        self.state.account.charge_components(evals);

        let st = &self.state;
        for i in 0..self.shifted.len() {
            self.shifted[i] = st.x_curr[i] + gamma * (st.w_curr[i] - st.x_curr[i]) - eta * self.delta[i];
        }
        let iteration = st.k + 1;
        if !all_finite(&self.shifted) {
            return Err(Error::Diverged {
                iteration,
                reason: "non-finite prox argument".into(),
                last_finite: st.x_curr.clone(),
            });
        }
        self.problem
            .regularizer()
            .prox_into(eta, &self.shifted, &mut self.x_next);
        let xn = norm(&self.x_next);
        if !xn.is_finite() || xn > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                iteration,
                reason: format!("iterate norm {xn:e}"),
                last_finite: st.x_curr.clone(),
            });
        }

        let refreshed = rng.bernoulli(prob);
        let step_norm = dist(&self.x_next, &st.x_curr);
        let snapshot_distance = dist(&self.x_next, &st.w_curr);

        let st = &mut self.state;
        std::mem::swap(&mut st.x_prev, &mut st.x_curr);
        std::mem::swap(&mut st.x_curr, &mut self.x_next);
        if refreshed {
            std::mem::swap(&mut st.w_prev, &mut st.w_curr);
            std::mem::swap(&mut st.f_w_prev, &mut st.f_w_curr);
            st.w_curr.copy_from_slice(&st.x_curr);
            self.problem.operator().full_into(&st.w_curr, &mut st.f_w_curr);
            st.account.charge_full();
            st.snapshot_refreshes += 1;
            st.snapshot_lag = true;
        } else if st.snapshot_lag {
            st.w_prev.copy_from_slice(&st.w_curr);
            st.f_w_prev.copy_from_slice(&st.f_w_curr);
            st.snapshot_lag = false;
        }
        st.k += 1;
        let x_curr = std::mem::take(&mut st.x_curr);
        st.accumulate(&x_curr);
        st.x_curr = x_curr;

        if self.validate_cache {
            let fresh = self.problem.full(&st.w_prev);
            if fresh.iter().zip(&st.f_w_prev).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(Error::Invariant(format!(
                    "cached F(w^(k-1)) is stale at iteration {}",
                    st.k
                )));
            }
        }

        self.record = StepRecord {
            iteration: st.k,
            batch: indices,
            refreshed,
            component_evals: evals + if refreshed { m as u64 } else { 0 },
            step_norm,
            snapshot_distance,
        };
        Ok(&self.record)
    }

    fn iteration(&self) -> u64 {
        self.state.k
    }

    fn last_iterate(&self) -> &[f64] {
        &self.state.x_curr
    }

    fn average(&self) -> Vec<f64> {
        self.state.average()
    }

    fn account(&self) -> OpAccount {
        self.state.account
    }

    fn refreshes(&self) -> u64 {
        self.state.snapshot_refreshes
    }

    fn eta(&self) -> f64 {
        self.params.eta
    }
}
