//! Deterministic full-operator baselines.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist, norm};
use crate::metrics::OpAccount;
use crate::rng::Rng;
use crate::vi::Problem;

use super::state::StepRecord;
use super::{Solver, DIVERGENCE_NORM};

fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::param("eta", format!("must be finite and positive, got {eta}")));
    }
    Ok(())
}

fn check_start(problem: &Problem, x0: &[f64]) -> Result<()> {
    problem.check_dim(x0)?;
    if !problem.contains(x0) {
        return Err(Error::param("x0", "starting point must lie in dom g"));
    }
    Ok(())
}

/// `out = prox_{ηg}(x - η v)`, failing on non-finite input or a runaway norm.
fn prox_step(problem: &Problem, eta: f64, x: &[f64], v: &[f64], buf: &mut [f64], out: &mut [f64], iteration: u64) -> Result<()> {
    for i in 0..buf.len() {
        buf[i] = x[i] - eta * v[i];
    }
    if !all_finite(buf) {
        return Err(Error::Diverged {
            iteration,
            reason: "non-finite prox argument".into(),
            last_finite: x.to_vec(),
        });
    }
    problem.regularizer().prox_into(eta, buf, out);
    let n = norm(out);
    if !n.is_finite() || n > DIVERGENCE_NORM {
        return Err(Error::Diverged {
            iteration,
            reason: format!("iterate norm {n:e}"),
            last_finite: x.to_vec(),
        });
    }
    Ok(())
}

/// `y = prox(x - ηF(x))`, `x⁺ = prox(x - ηF(y))`; two full evaluations per
/// step. The reported average is over the `y` iterates.
#[derive(Debug, Clone)]
pub struct ExtraGradient {
    problem: Problem,
    eta: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    x_next: Vec<f64>,
    fv: Vec<f64>,
    buf: Vec<f64>,
    avg_sum: Vec<f64>,
    k: u64,
    account: OpAccount,
    record: StepRecord,
}

impl ExtraGradient {
    pub fn new(problem: Problem, eta: f64, x0: &[f64]) -> Result<Self> {
        check_eta(eta)?;
        check_start(&problem, x0)?;
        let d = problem.dim();
        let account = OpAccount::new(problem.num_components());
        Ok(Self {
            problem,
            eta,
            x: x0.to_vec(),
            y: x0.to_vec(),
            x_next: vec![0.0; d],
            fv: vec![0.0; d],
            buf: vec![0.0; d],
            avg_sum: vec![0.0; d],
            k: 0,
            account,
            record: StepRecord::default(),
        })
    }

    /// Extrapolated point of the latest step.
    pub fn extrapolated(&self) -> &[f64] {
        &self.y
    }
}

impl Solver for ExtraGradient {
    fn name(&self) -> &str {
        "eg"
    }

    fn step(&mut self, _rng: &mut Rng) -> Result<&StepRecord> {
        let iteration = self.k + 1;
        let op = self.problem.operator();
        op.full_into(&self.x, &mut self.fv);
        prox_step(&self.problem, self.eta, &self.x, &self.fv, &mut self.buf, &mut self.y, iteration)?;
        op.full_into(&self.y, &mut self.fv);
        prox_step(&self.problem, self.eta, &self.x, &self.fv, &mut self.buf, &mut self.x_next, iteration)?;
        self.account.charge_full();
        self.account.charge_full();

        let step_norm = dist(&self.x_next, &self.x);
        std::mem::swap(&mut self.x, &mut self.x_next);
        for (s, v) in self.avg_sum.iter_mut().zip(&self.y) {
            *s += v;
        }
        self.k = iteration;
        self.record = StepRecord {
            iteration,
            batch: Vec::new(),
            refreshed: false,
            component_evals: 2 * self.problem.num_components() as u64,
            step_norm,
            snapshot_distance: 0.0,
        };
        Ok(&self.record)
    }

    fn iteration(&self) -> u64 {
        self.k
    }

    fn last_iterate(&self) -> &[f64] {
        &self.x
    }

    fn average(&self) -> Vec<f64> {
        if self.k == 0 {
            return self.x.clone();
        }
        let inv = 1.0 / self.k as f64;
        self.avg_sum.iter().map(|s| s * inv).collect()
    }

    fn account(&self) -> OpAccount {
        self.account
    }

    fn eta(&self) -> f64 {
        self.eta
    }
}

/// Optimistic gradient: `x^{k+1} = prox(x^k - η(2F(x^k) - F(x^{k-1})))`,
/// with `x^{-1} = x^0`. One full evaluation per step plus one to start.
#[derive(Debug, Clone)]
pub struct Popov {
    problem: Problem,
    eta: f64,
    x: Vec<f64>,
    x_next: Vec<f64>,
    fx: Vec<f64>,
    fx_prev: Vec<f64>,
    delta: Vec<f64>,
    buf: Vec<f64>,
    avg_sum: Vec<f64>,
    k: u64,
    account: OpAccount,
    record: StepRecord,
}

impl Popov {
    pub fn new(problem: Problem, eta: f64, x0: &[f64]) -> Result<Self> {
        check_eta(eta)?;
        check_start(&problem, x0)?;
        let d = problem.dim();
        let mut account = OpAccount::new(problem.num_components());
        let fx = problem.full(x0);
        account.charge_full();
        Ok(Self {
            problem,
            eta,
            x: x0.to_vec(),
            x_next: vec![0.0; d],
            fx_prev: fx.clone(),
            fx,
            delta: vec![0.0; d],
            buf: vec![0.0; d],
            avg_sum: vec![0.0; d],
            k: 0,
            account,
            record: StepRecord::default(),
        })
    }
}

impl Solver for Popov {
    fn name(&self) -> &str {
        "popov"
    }

    fn step(&mut self, _rng: &mut Rng) -> Result<&StepRecord> {
        let iteration = self.k + 1;
        for i in 0..self.delta.len() {
            self.delta[i] = 2.0 * self.fx[i] - self.fx_prev[i];
        }
        prox_step(&self.problem, self.eta, &self.x, &self.delta, &mut self.buf, &mut self.x_next, iteration)?;
        let step_norm = dist(&self.x_next, &self.x);
        std::mem::swap(&mut self.x, &mut self.x_next);
        std::mem::swap(&mut self.fx, &mut self.fx_prev);
        self.problem.operator().full_into(&self.x, &mut self.fx);
        self.account.charge_full();
        for (s, v) in self.avg_sum.iter_mut().zip(&self.x) {
            *s += v;
        }
        self.k = iteration;
        self.record = StepRecord {
            iteration,
            batch: Vec::new(),
            refreshed: false,
            component_evals: self.problem.num_components() as u64,
            step_norm,
            snapshot_distance: 0.0,
        };
        Ok(&self.record)
    }

    fn iteration(&self) -> u64 {
        self.k
    }

    fn last_iterate(&self) -> &[f64] {
        &self.x
    }

    fn average(&self) -> Vec<f64> {
        if self.k == 0 {
            return self.x.clone();
        }
        let inv = 1.0 / self.k as f64;
        self.avg_sum.iter().map(|s| s * inv).collect()
    }

    fn account(&self) -> OpAccount {
        self.account
    }

    fn eta(&self) -> f64 {
        self.eta
    }
}
