//! Proximal maps: the zero function, the unit simplex indicator and block
//! products of those.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist};
use crate::vi::Problem;

/// Coordinate slack allowed below zero in the simplex membership test.
pub const SIMPLEX_COORD_TOL: f64 = 1e-12;
/// Slack allowed on the sum constraint in the simplex membership test.
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

/// A proper closed convex function with a cheap proximal map
/// `prox_{alpha g}(x) = argmin_y alpha * g(y) + 0.5 * |y - x|^2`.
pub trait Regularizer: Send + Sync + Debug {
    /// Writes `prox_{alpha g}(x)` into `out`. `x` must be finite.
    fn prox_into(&self, alpha: f64, x: &[f64], out: &mut [f64]);

    /// `g(x)`, or `+inf` outside `dom g`.
    fn value(&self, x: &[f64]) -> f64;

    fn contains(&self, x: &[f64]) -> bool {
        self.value(x).is_finite()
    }

    /// Fixed ambient dimension, if the function carries one.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn prox(&self, alpha: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(alpha, x, &mut out);
        out
    }
}

/// `g = 0`; the prox is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Regularizer for Zero {
    fn prox_into(&self, _alpha: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

pub fn prox_zero(_alpha: f64, x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// The unit simplex `{v >= 0, sum v = 1}` in `R^dim`, used through its
/// indicator function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplexDomain {
    pub dim: usize,
}

impl SimplexDomain {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "simplex dimension must be positive"));
        }
        Ok(Self { dim })
    }

    /// Largest violation of the simplex constraints: negative mass or
    /// deviation of the sum from one.
    pub fn violation(v: &[f64]) -> f64 {
        let neg = v.iter().fold(0.0_f64, |m, &x| m.max(-x));
        let sum: f64 = v.iter().sum();
        neg.max((sum - 1.0).abs())
    }

    pub fn is_member(v: &[f64]) -> bool {
        v.iter().all(|&x| x >= -SIMPLEX_COORD_TOL)
            && ((v.iter().sum::<f64>()) - 1.0).abs() <= SIMPLEX_SUM_TOL
    }

    pub fn barycenter(&self) -> Vec<f64> {
        vec![1.0 / self.dim as f64; self.dim]
    }
}

impl Regularizer for SimplexDomain {
    fn prox_into(&self, _alpha: f64, x: &[f64], out: &mut [f64]) {
        project_simplex_into(x, out);
    }

    fn value(&self, x: &[f64]) -> f64 {
        if x.len() == self.dim && Self::is_member(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
}

/// Euclidean projection onto the unit simplex.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::param("v", "cannot project an empty vector"));
    }
    if !all_finite(v) {
        return Err(Error::NonFinite("simplex projection input"));
    }
    let mut out = vec![0.0; v.len()];
    project_simplex_into(v, &mut out);
    Ok(out)
}

/// Michelot's active-set iteration: the threshold only grows and the set
/// `{y_i > tau}` only shrinks, so it stops after at most `n` passes (two or
/// three in practice) without allocating.
pub(crate) fn project_simplex_into(y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(y.len(), out.len());
    debug_assert!(!y.is_empty());

    let mut count = y.len();
    let mut tau = (y.iter().sum::<f64>() - 1.0) / count as f64;
    loop {
        let (sum, n) = y
            .iter()
            .filter(|&&v| v > tau)
            .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
        if n == count || n == 0 {
            break;
        }
        count = n;
        tau = (sum - 1.0) / n as f64;
    }
    for (o, &yi) in out.iter_mut().zip(y) {
        *o = (yi - tau).max(0.0);
    }
}

/// Separable function on a partition of coordinates into consecutive blocks:
/// `g(z_1, ..., z_n) = sum_i g_i(z_i)`. Its prox is blockwise.
#[derive(Debug, Clone)]
pub struct BlockProduct {
    blocks: Vec<(usize, Arc<dyn Regularizer>)>,
}

impl BlockProduct {
    pub fn new(blocks: Vec<(usize, Arc<dyn Regularizer>)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::param("blocks", "at least one block required"));
        }
        for (d, g) in &blocks {
            if *d == 0 {
                return Err(Error::param("blocks", "block dimension must be positive"));
            }
            if let Some(gd) = g.dim() {
                if gd != *d {
                    return Err(Error::DimensionMismatch {
                        expected: *d,
                        actual: gd,
                        context: "block regularizer",
                    });
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn simplices(dims: &[usize]) -> Result<Self> {
        let blocks = dims
            .iter()
            .map(|&d| Ok((d, Arc::new(SimplexDomain::new(d)?) as Arc<dyn Regularizer>)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|(d, _)| d).sum()
    }

    pub fn block_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().map(|(d, _)| *d)
    }
}

impl Regularizer for BlockProduct {
    fn prox_into(&self, alpha: f64, x: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for (d, g) in &self.blocks {
            let range = offset..offset + d;
            g.prox_into(alpha, &x[range.clone()], &mut out[range]);
            offset += d;
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        if x.len() != self.total_dim() {
            return f64::INFINITY;
        }
        let mut offset = 0;
        let mut total = 0.0;
        for (d, g) in &self.blocks {
            total += g.value(&x[offset..offset + d]);
            offset += d;
        }
        total
    }

    fn dim(&self) -> Option<usize> {
        Some(self.total_dim())
    }
}

/// Prox of the indicator of a product of simplices. Independent of `alpha`.
pub fn prox_indicator_product(domains: &[SimplexDomain], alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
    let total: usize = domains.iter().map(|s| s.dim).sum();
    if total != x.len() {
        return Err(Error::DimensionMismatch {
            expected: total,
            actual: x.len(),
            context: "stacked vector vs block partition",
        });
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("prox input"));
    }
    let dims: Vec<usize> = domains.iter().map(|s| s.dim).collect();
    Ok(BlockProduct::simplices(&dims)?.prox(alpha, x))
}

/// `|x - prox_{eta g}(x - eta F(x))|`; zero exactly at solutions of the VI.
pub fn prox_residual(problem: &Problem, x: &[f64], eta: f64) -> f64 {
    let f = problem.full(x);
    let shifted: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi - eta * fi).collect();
    let p = problem.prox(eta, &shifted);
    dist(x, &p)
}
