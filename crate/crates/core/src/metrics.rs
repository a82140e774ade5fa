//! Convergence measures and oracle-cost bookkeeping.
//!
//! Costs are counted in matvec-equivalent operations: one operation is one
//! evaluation of the pair `(A y, A^T x)`, i.e. `M` component evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MatrixGame;
use crate::linalg::dot;
use crate::prox::{project_simplex, prox_residual, SimplexDomain};
use crate::trace::TraceRow;
use crate::vi::Problem;

/// Infeasibility tolerated (and silently projected away) before a gap is
/// evaluated.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpAccount {
    pub component_evals: u64,
    pub full_evals: u64,
    pub num_components: usize,
}

impl OpAccount {
    pub fn new(num_components: usize) -> Self {
        Self {
            num_components,
            ..Self::default()
        }
    }

    pub fn charge_components(&mut self, n: u64) {
        self.component_evals += n;
    }

    /// A full evaluation is billed as `M` component evaluations.
    pub fn charge_full(&mut self) {
        self.full_evals += 1;
        self.component_evals += self.num_components as u64;
    }

    pub fn matvec_ops(&self) -> f64 {
        self.component_evals as f64 / self.num_components as f64
    }
}

/// A gap criterion that can be evaluated in closed form.
pub trait GapMeasure: Send + Sync {
    fn gap(&self, z: &[f64]) -> Result<f64>;
}

impl GapMeasure for MatrixGame {
    fn gap(&self, z: &[f64]) -> Result<f64> {
        game_duality_gap(self, z)
    }
}

/// Splits `z = (x, y)` and checks both blocks are on the simplex within
/// [`FEASIBILITY_TOL`], projecting when slightly off.
fn feasible_blocks(game: &MatrixGame, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = game.size();
    if z.len() != 2 * d {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            actual: z.len(),
            context: "game point (x, y)",
        });
    }
    let fix = |block: &[f64]| -> Result<Vec<f64>> {
        if !block.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gap input"));
        }
        let violation = SimplexDomain::violation(block);
        if violation > FEASIBILITY_TOL {
            return Err(Error::Infeasible { violation });
        }
        if SimplexDomain::is_member(block) {
            Ok(block.to_vec())
        } else {
            project_simplex(block)
        }
    };
    Ok((fix(&z[..d])?, fix(&z[d..])?))
}

/// `max_i (A^T x)_i - min_j (A y)_j`.
pub fn game_duality_gap(game: &MatrixGame, z: &[f64]) -> Result<f64> {
    let (x, y) = feasible_blocks(game, z)?;
    let atx = game.at_times(&x);
    let ay = game.a_times(&y);
    let max = atx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ay.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapWitness {
    /// Maximizing comparator `u* = (e_{i*}, e_{j*})`.
    pub comparator: Vec<f64>,
    pub row: usize,
    pub col: usize,
    /// `<F(u*), z - u*>`, evaluated through the operator.
    pub bound: f64,
}

/// The vertex pair attaining `sup_u <F(u), z - u>` over the simplex product,
/// with the value recomputed from the operator at that vertex.
pub fn gap_lower_witness(game: &MatrixGame, z: &[f64]) -> Result<GapWitness> {
    let (x, y) = feasible_blocks(game, z)?;
    let d = game.size();
    let ay = game.a_times(&y);
    let atx = game.at_times(&x);
    let row = argmin(&ay);
    let col = argmax(&atx);
    let mut u = vec![0.0; 2 * d];
    u[row] = 1.0;
    u[d + col] = 1.0;
    let fu = game.operator_full(&u)?;
    let zz: Vec<f64> = x.iter().chain(&y).copied().collect();
    let diff: Vec<f64> = zz.iter().zip(&u).map(|(a, b)| a - b).collect();
    Ok(GapWitness {
        bound: dot(&fu, &diff),
        comparator: u,
        row,
        col,
    })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Prox-gradient residual; the fallback measure when no closed-form gap is
/// available.
pub fn residual_metric(problem: &Problem, z: &[f64], eta: f64) -> f64 {
    prox_residual(problem, z, eta)
}

/// Least-squares slope of `ln(gap_avg)` against `ln(iter)` over trace rows
/// with `k_lo <= iter <= k_hi`.
pub fn slope_estimate(rows: &[TraceRow], k_lo: u64, k_hi: u64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.iter >= k_lo && r.iter <= k_hi && r.iter > 0 && r.gap_avg > 0.0)
        .map(|r| ((r.iter as f64).ln(), r.gap_avg.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 rows with positive gap in [{k_lo}, {k_hi}], found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all rows share one iteration".into()));
    }
    Ok(sxy / sxx)
}
