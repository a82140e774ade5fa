//! Solver parameters and the step-size rules that come with the convergence
//! guarantee for the batched optimistic method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest momentum / snapshot probability covered by the guarantee.
pub const MAX_THEOREM_GAMMA: f64 = 1.0 / 16.0;

/// How the mini-batch is drawn each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// `b` independent uniform draws from `0..M`, with replacement.
    #[default]
    Uniform,
    /// Every index exactly once; requires `b == M`. Deterministic, used to
    /// reduce the method to its full-operator counterpart.
    FullPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub eta: f64,
    pub gamma: f64,
    pub prob: f64,
    pub batch: usize,
    pub max_iters: u64,
    pub op_budget: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingMode,
}

impl SolverParams {
    /// Step-size-only parameters for the deterministic baselines.
    pub fn deterministic(eta: f64, max_iters: u64) -> Self {
        Self {
            eta,
            gamma: 0.0,
            prob: 1.0,
            batch: 1,
            max_iters,
            op_budget: None,
            seed: 0,
            sampling: SamplingMode::FullPass,
        }
    }

    pub fn validate(&self, num_components: usize) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param("eta", format!("must be positive and finite, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.prob > 0.0 && self.prob <= 1.0) {
            return Err(Error::param("prob", format!("must lie in (0, 1], got {}", self.prob)));
        }
        if self.batch == 0 || self.batch > num_components {
            return Err(Error::param(
                "batch",
                format!("must lie in 1..={num_components}, got {}", self.batch),
            ));
        }
        if self.sampling == SamplingMode::FullPass && self.batch != num_components {
            return Err(Error::param("sampling", "full-pass sampling requires batch == M"));
        }
        if let Some(budget) = self.op_budget {
            if !(budget >= 0.0) {
                return Err(Error::param("op_budget", "must be nonnegative"));
            }
        }
        Ok(())
    }

    /// True when the parameters fall under the convergence guarantee:
    /// `p = gamma` in `(0, 1/16]` with uniform sampling.
    pub fn is_theorem_mode(&self) -> bool {
        self.gamma == self.prob
            && self.gamma > 0.0
            && self.gamma <= MAX_THEOREM_GAMMA
            && self.sampling == SamplingMode::Uniform
    }
}

/// Output of the tuning rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub eta: f64,
    pub gamma: f64,
    pub prob: f64,
    pub batch: usize,
    /// `b / M` exceeded `1/16` and was clamped (oracle-optimal mode only).
    pub clamped: bool,
    /// `b > L_bar * sqrt(M) / L`: the `b L / eps` term dominates the
    /// oracle complexity, so larger batches stop paying off.
    pub large_batch: bool,
}

impl Tuning {
    pub fn into_params(self, max_iters: u64, seed: u64) -> SolverParams {
        SolverParams {
            eta: self.eta,
            gamma: self.gamma,
            prob: self.prob,
            batch: self.batch,
            max_iters,
            op_budget: None,
            seed,
            sampling: SamplingMode::Uniform,
        }
    }
}

/// `p = gamma` and `eta = min(sqrt(gamma b) / (8 L_bar), 1 / (8 L))`.
pub fn tune_params(l: f64, l_bar: f64, batch: usize, gamma: f64, num_components: usize) -> Result<Tuning> {
    if !(gamma > 0.0 && gamma <= MAX_THEOREM_GAMMA) {
        return Err(Error::param("gamma", format!("must lie in (0, 1/16], got {gamma}")));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::param("L", format!("must be positive, got {l}")));
    }
    if !(l_bar.is_finite() && l_bar > 0.0) {
        return Err(Error::param("L_bar", format!("must be positive, got {l_bar}")));
    }
    if batch == 0 || batch > num_components {
        return Err(Error::param("batch", format!("must lie in 1..={num_components}, got {batch}")));
    }
    let b = batch as f64;
    let eta = ((gamma * b).sqrt() / (8.0 * l_bar)).min(1.0 / (8.0 * l));
    Ok(Tuning {
        eta,
        gamma,
        prob: gamma,
        batch,
        clamped: false,
        large_batch: b > l_bar * (num_components as f64).sqrt() / l,
    })
}

/// Oracle-optimal choice `p = gamma = b / M`, clamped to `1/16`.
pub fn tune_oracle_optimal(l: f64, l_bar: f64, batch: usize, num_components: usize) -> Result<Tuning> {
    if num_components == 0 {
        return Err(Error::param("M", "must be positive"));
    }
    let requested = batch as f64 / num_components as f64;
    let gamma = requested.min(MAX_THEOREM_GAMMA);
    let mut t = tune_params(l, l_bar, batch, gamma, num_components)?;
    t.clamped = requested > MAX_THEOREM_GAMMA;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_batch_step() {
        let t = tune_params(1.0, 1.0, 1, 1.0 / 16.0, 100).unwrap();
        assert_eq!(t.eta, 1.0 / 32.0);
        assert_eq!(t.prob, t.gamma);
    }

    #[test]
    fn large_batch_hits_operator_bound() {
        let t = tune_params(1.0, 1.0, 64, 1.0 / 16.0, 100).unwrap();
        assert_eq!(t.eta, 1.0 / 8.0);
    }

    #[test]
    fn oracle_optimal_probability() {
        let t = tune_oracle_optimal(1.0, 1.0, 4, 100).unwrap();
        assert_eq!(t.prob, 0.04);
        assert_eq!(t.gamma, 0.04);
        assert!(!t.clamped);
    }

    #[test]
    fn oracle_optimal_clamps() {
        let t = tune_oracle_optimal(1.0, 1.0, 16, 100).unwrap();
        assert_eq!(t.prob, MAX_THEOREM_GAMMA);
        assert!(t.clamped);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(tune_params(1.0, 1.0, 1, 0.0, 10).is_err());
        assert!(tune_params(1.0, 1.0, 1, 0.1, 10).is_err());
        assert!(tune_params(0.0, 1.0, 1, 0.05, 10).is_err());
        assert!(tune_params(1.0, -1.0, 1, 0.05, 10).is_err());
        assert!(tune_params(1.0, 1.0, 11, 0.05, 10).is_err());
    }

    #[test]
    fn large_batch_flag() {
        // threshold L_bar sqrt(M) / L = 2 * 10 / 1 = 20
        assert!(!tune_params(1.0, 2.0, 20, 0.05, 100).unwrap().large_batch);
        assert!(tune_params(1.0, 2.0, 21, 0.05, 100).unwrap().large_batch);
    }

    #[test]
    fn validate_full_pass_needs_full_batch() {
        let mut p = Tuning {
            eta: 0.1,
            gamma: 1.0,
            prob: 1.0,
            batch: 3,
            clamped: false,
            large_batch: false,
        }
        .into_params(10, 0);
        p.sampling = SamplingMode::FullPass;
        assert!(p.validate(4).is_err());
        assert!(p.validate(3).is_ok());
        assert!(!p.is_theorem_mode());
    }

    proptest! {
        #[test]
        fn eta_respects_both_caps(
            l in 1e-3f64..1e3, ratio in 1.0f64..50.0, b in 1usize..64, gamma in 1e-4f64..0.0625
        ) {
            let l_bar = l * ratio;
            let t = tune_params(l, l_bar, b, gamma, 64).unwrap();
            prop_assert!(t.eta <= 1.0 / (8.0 * l));
            prop_assert!(t.eta <= (gamma * b as f64).sqrt() / (8.0 * l_bar));
            prop_assert!(t.eta == 1.0 / (8.0 * l) || t.eta == (gamma * b as f64).sqrt() / (8.0 * l_bar));
        }

        #[test]
        fn eta_monotone_in_batch(l in 1e-3f64..1e3, ratio in 1.0f64..50.0, b in 1usize..63, gamma in 1e-4f64..0.0625) {
            let l_bar = l * ratio;
            let small = tune_params(l, l_bar, b, gamma, 64).unwrap();
            let large = tune_params(l, l_bar, b + 1, gamma, 64).unwrap();
            prop_assert!(large.eta >= small.eta);
        }
    }
}
