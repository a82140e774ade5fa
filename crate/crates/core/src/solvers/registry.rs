use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::params::SolverParams;
use crate::vi::Problem;

use super::baselines::{ExtraGradient, Popov};
use super::ommb::Ommb;
use super::Solver;

/// Builds a solver from a problem, its parameters and a feasible start.
/// Deterministic baselines read only `params.eta`.
pub type SolverFactory = Box<dyn Fn(&Problem, &SolverParams, &[f64]) -> Result<Box<dyn Solver>> + Send + Sync>;

/// Name-to-factory table. Names are unique; iteration order is
/// lexicographic.
pub struct SolverRegistry {
    factories: BTreeMap<String, SolverFactory>,
}

impl fmt::Debug for SolverRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `ommb`, `eg` and `popov`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(
            "ommb",
            Box::new(|p, params, x0| Ok(Box::new(Ommb::new(p.clone(), params.clone(), x0)?) as Box<dyn Solver>)),
        )
        .expect("fresh registry");
        r.register(
            "eg",
            Box::new(|p, params, x0| Ok(Box::new(ExtraGradient::new(p.clone(), params.eta, x0)?) as Box<dyn Solver>)),
        )
        .expect("fresh registry");
        r.register(
            "popov",
            Box::new(|p, params, x0| Ok(Box::new(Popov::new(p.clone(), params.eta, x0)?) as Box<dyn Solver>)),
        )
        .expect("fresh registry");
        r
    }

    pub fn register(&mut self, name: &str, factory: SolverFactory) -> Result<()> {
        if self.factories.contains_key(name) {
            return Err(Error::DuplicateSolver(name.to_string()));
        }
        self.factories.insert(name.to_string(), factory);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, problem: &Problem, params: &SolverParams, x0: &[f64]) -> Result<Box<dyn Solver>> {
        let f = self.factories.get(name).ok_or_else(|| Error::UnknownSolver {
            name: name.to_string(),
            known: self.names().into_iter().map(String::from).collect(),
        })?;
        f(problem, params, x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_listed() {
        let r = SolverRegistry::with_builtins();
        assert_eq!(r.names(), vec!["eg", "ommb", "popov"]);
    }

    #[test]
    fn duplicate_rejected() {
        let mut r = SolverRegistry::with_builtins();
        let err = r
            .register("eg", Box::new(|_, _, _| Err(Error::Invariant("unused".into()))))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateSolver(n) if n == "eg"));
    }

    #[test]
    fn unknown_lists_known() {
        let r = SolverRegistry::with_builtins();
        let g = std::sync::Arc::new(crate::game::MatrixGame::new(crate::game::Matrix::identity(2)).unwrap());
        let p = g.to_problem().unwrap();
        let params = SolverParams::deterministic(0.1, 1);
        let err = match r.build("adam", &p, &params, &p.default_start()) {
            Err(e) => e,
            Ok(_) => panic!("unknown name accepted"),
        };
        let msg = err.to_string();
        assert!(msg.contains("adam") && msg.contains("ommb") && msg.contains("popov"), "{msg}");
    }
}
