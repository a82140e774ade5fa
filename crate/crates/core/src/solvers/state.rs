use serde::Serialize;

use crate::metrics::OpAccount;
use crate::vi::Problem;

/// Iterate history of the optimistic method.
///
/// Holds `x^k`, `x^{k-1}`, `w^k`, `w^{k-1}` and the cached operator values
/// at both snapshots. The ergodic average covers `x^1..x^k`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x_curr: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub w_curr: Vec<f64>,
    pub w_prev: Vec<f64>,
    /// `F(w^k)`
    pub f_w_curr: Vec<f64>,
    /// `F(w^{k-1})`
    pub f_w_prev: Vec<f64>,
    pub k: u64,
    pub account: OpAccount,
    pub snapshot_refreshes: u64,
    /// True while `w^{k-1} != w^k` (right after a refresh).
    pub(crate) snapshot_lag: bool,
    avg_sum: Vec<f64>,
}

impl SolverState {
    /// `x^0 = w^0 = x^{-1} = w^{-1} = x0`; one full evaluation fills both
    /// snapshot caches and is charged to the account.
    pub fn init(problem: &Problem, x0: &[f64]) -> Self {
        let mut account = OpAccount::new(problem.num_components());
        let f0 = problem.full(x0);
        account.charge_full();
        Self {
            x_curr: x0.to_vec(),
            x_prev: x0.to_vec(),
            w_curr: x0.to_vec(),
            w_prev: x0.to_vec(),
            f_w_curr: f0.clone(),
            f_w_prev: f0,
            k: 0,
            account,
            snapshot_refreshes: 0,
            snapshot_lag: false,
            avg_sum: vec![0.0; x0.len()],
        }
    }

    pub(crate) fn accumulate(&mut self, x: &[f64]) {
        for (s, v) in self.avg_sum.iter_mut().zip(x) {
            *s += v;
        }
    }

    pub fn average(&self) -> Vec<f64> {
        if self.k == 0 {
            return self.x_curr.clone();
        }
        let inv = 1.0 / self.k as f64;
        self.avg_sum.iter().map(|s| s * inv).collect()
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StepRecord {
    /// Index of the iterate produced (`k + 1` after step `k`).
    pub iteration: u64,
    /// Sampled component indices; empty for full-pass and full-operator steps.
    pub batch: Vec<usize>,
    pub refreshed: bool,
    pub component_evals: u64,
    /// `|x^{k+1} - x^k|`
    pub step_norm: f64,
    /// `|x^{k+1} - w^k|`
    pub snapshot_distance: f64,
}
