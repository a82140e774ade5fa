//! Experiment configuration.
//!
//! A TOML file with four optional sections; every key has a default and
//! command-line flags override file values.
//!
//! ```toml
//! [problem]
//! kind = "policeman-burglar"   # or uniform-grid, seeded-gaussian
//! dim = 200
//! seed = 0
//! theta = 0.8
//! # matrix = "a.txt"           # load instead of generating
//!
//! [run]
//! solvers = ["ommb", "eg"]
//! batches = [1, 2, 4]
//! seeds = [0, 1, 2]
//! cadence = 100
//! out = "runs"
//! jobs = 1
//! record_time = true
//!
//! [stop]
//! eps = 1e-2
//! max_ops = 1e6
//! max_iters = 10000000
//!
//! [solvers.ommb]
//! tuning = "oracle-optimal"    # or "theorem" (with gamma) or "manual"
//!
//! [solvers.eg]
//! eta = 0.001                  # default 1/(2L); popov defaults to 1/(4L)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vibench_core::game::DEFAULT_THETA;
use vibench_core::GeneratorKind;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: GeneratorKind,
    pub dim: usize,
    pub seed: u64,
    pub theta: f64,
    /// Matrix file; overrides the generator fields.
    pub matrix: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::PolicemanBurglar,
            dim: 50,
            seed: 0,
            theta: DEFAULT_THETA,
            matrix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solvers: Vec<String>,
    pub batches: Vec<usize>,
    pub seeds: Vec<u64>,
    pub cadence: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub record_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solvers: vec!["ommb".into()],
            batches: vec![1],
            seeds: vec![0],
            cadence: 100,
            out: PathBuf::from("vibench-out"),
            jobs: 1,
            record_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    pub eps: Option<f64>,
    pub max_ops: Option<f64>,
    pub max_iters: Option<u64>,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            eps: None,
            max_ops: None,
            max_iters: Some(100_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMode {
    /// `p = gamma = b / M`, clamped to `1/16`.
    #[default]
    OracleOptimal,
    /// `p = gamma` from the `gamma` key (default `1/16`).
    Theorem,
    /// `eta`, `gamma` and `prob` taken verbatim.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tuning: TuningMode,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub prob: Option<f64>,
    /// Recompute the cached snapshot operator after every step.
    pub cache_check: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub run: RunConfig,
    pub stop: StopConfig,
    pub solvers: BTreeMap<String, SolverConfig>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub kind: Option<GeneratorKind>,
    pub matrix: Option<PathBuf>,
    pub solvers: Option<Vec<String>>,
    pub dim: Option<usize>,
    pub batches: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub eps: Option<f64>,
    pub max_ops: Option<f64>,
    pub max_iters: Option<u64>,
    pub cadence: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub no_timing: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads a config file. A relative `problem.matrix` is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(m), Some(dir)) = (cfg.problem.matrix.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.kind {
            self.problem.kind = k;
        }
        if let Some(m) = &o.matrix {
            self.problem.matrix = Some(m.clone());
        }
        if let Some(s) = &o.solvers {
            self.run.solvers = s.clone();
        }
        if let Some(d) = o.dim {
            self.problem.dim = d;
        }
        if let Some(b) = &o.batches {
            self.run.batches = b.clone();
        }
        if let Some(s) = &o.seeds {
            self.run.seeds = s.clone();
        }
        if o.eps.is_some() {
            self.stop.eps = o.eps;
        }
        if o.max_ops.is_some() {
            self.stop.max_ops = o.max_ops;
        }
        if o.max_iters.is_some() {
            self.stop.max_iters = o.max_iters;
        }
        if let Some(c) = o.cadence {
            self.run.cadence = c;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(j) = o.jobs {
            self.run.jobs = j;
        }
        if o.no_timing {
            self.run.record_time = false;
        }
    }

    /// Field-level checks that do not need the problem instance.
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(CliError::config(format!("{field}: {msg}")));
        if self.problem.matrix.is_none() && self.problem.dim < 2 {
            return err("problem.dim", format!("must be at least 2, got {}", self.problem.dim));
        }
        if !(self.problem.theta.is_finite() && self.problem.theta > 0.0) {
            return err("problem.theta", format!("must be positive, got {}", self.problem.theta));
        }
        if self.run.solvers.is_empty() {
            return err("run.solvers", "at least one solver is required".into());
        }
        if self.run.seeds.is_empty() {
            return err("run.seeds", "at least one seed is required".into());
        }
        if self.run.batches.is_empty() {
            return err("run.batches", "at least one batch size is required".into());
        }
        for (i, &b) in self.run.batches.iter().enumerate() {
            if b == 0 {
                return err(&format!("run.batches[{i}]"), "must be at least 1".into());
            }
        }
        if self.run.cadence == 0 {
            return err("run.cadence", "must be at least 1".into());
        }
        if self.run.jobs == 0 {
            return err("run.jobs", "must be at least 1".into());
        }
        if let Some(e) = self.stop.eps {
            if !(e.is_finite() && e > 0.0) {
                return err("stop.eps", format!("must be positive, got {e}"));
            }
        }
        if let Some(b) = self.stop.max_ops {
            if !(b.is_finite() && b > 0.0) {
                return err("stop.max_ops", format!("must be positive and finite, got {b}"));
            }
        }
        if self.stop.eps.is_none() && self.stop.max_ops.is_none() && self.stop.max_iters.is_none() {
            return err("stop", "need eps, max_ops or max_iters".into());
        }
        for (name, s) in &self.solvers {
            let field = |k: &str| format!("solvers.{name}.{k}");
            for (k, v) in [("eta", s.eta), ("gamma", s.gamma), ("prob", s.prob)] {
                if let Some(v) = v {
                    if !v.is_finite() || v < 0.0 {
                        return err(&field(k), format!("must be finite and nonnegative, got {v}"));
                    }
                }
            }
            if s.tuning == TuningMode::Manual && s.eta.is_none() && name == "ommb" {
                return err(&field("eta"), "manual tuning requires eta".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.solvers.insert(
            "ommb".into(),
            SolverConfig {
                tuning: TuningMode::Theorem,
                gamma: Some(0.05),
                ..Default::default()
            },
        );
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"
            [problem]
            kind = "policeman-burglar"
            dim = 20
            [run]
            solvers = ["ommb", "eg"]
            batches = [1, 2]
            seeds = [3]
            [stop]
            eps = 1e-2
            max_ops = 1e5
            [solvers.ommb]
            tuning = "theorem"
            gamma = 0.0625
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.problem.dim, 20);
        assert_eq!(c.run.batches, vec![1, 2]);
        assert_eq!(c.solvers["ommb"].tuning, TuningMode::Theorem);
        c.validate().unwrap();
    }

    #[test]
    fn errors_name_fields() {
        let bad = ExperimentConfig::from_toml("[run]\nbatches = [1, 0]\n").unwrap();
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("run.batches[1]"), "{msg}");
        let msg = ExperimentConfig::from_toml("[run]\nbogus = 1\n").unwrap_err().to_string();
        assert!(msg.contains("bogus"), "{msg}");
        let mut c = ExperimentConfig::default();
        c.run.seeds.clear();
        assert!(c.validate().unwrap_err().to_string().contains("run.seeds"));
    }

    #[test]
    fn flags_win() {
        let mut c = ExperimentConfig::from_toml("[problem]\ndim = 20\n").unwrap();
        c.apply(&Overrides {
            dim: Some(30),
            batches: Some(vec![4]),
            no_timing: true,
            ..Default::default()
        });
        assert_eq!(c.problem.dim, 30);
        assert_eq!(c.run.batches, vec![4]);
        assert!(!c.run.record_time);
    }
}
