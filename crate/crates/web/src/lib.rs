//! Browser bindings for the solver library.
//!
//! Three operations are exposed to JavaScript: a convergence curve for one
//! solver, Euclidean projection onto the simplex, and the entries of a
//! generated test matrix. Each binding is a thin wrapper over a plain Rust
//! function so the logic is testable off the browser.

use std::sync::Arc;

use vibench_core::params::tune_oracle_optimal;
use vibench_core::solvers::{run_solver, ExtraGradient, Ommb, Popov};
use vibench_core::{GeneratorKind, GeneratorSpec, MatrixGame, Problem, Rng, RunOptions, Solver, StopCriteria};
use wasm_bindgen::prelude::*;

/// Requested work is capped so a single call cannot hang the page.
pub const MAX_DIM: usize = 400;
pub const MAX_OPS: f64 = 2.0e5;

fn build_game(kind: &str, dim: usize, seed: u64) -> Result<(Arc<MatrixGame>, Problem), String> {
    if dim > MAX_DIM {
        return Err(format!("dim must be at most {MAX_DIM}, got {dim}"));
    }
    let kind: GeneratorKind = kind.parse().map_err(|e: vibench_core::Error| e.to_string())?;
    let a = vibench_core::game::generate_matrix(&GeneratorSpec::new(kind, dim, seed)).map_err(|e| e.to_string())?;
    let game = Arc::new(MatrixGame::new(a).map_err(|e| e.to_string())?);
    let problem = game.to_problem().map_err(|e| e.to_string())?;
    Ok((game, problem))
}

/// Flat `[ops_0, gap_0, ops_1, gap_1, ...]` for one solver on a generated
/// game, at roughly `points` rows.
///
/// `solver` is `ommb`, `eg` or `popov`. OMMB uses `p = gamma = b / M`
/// tuning with its step size multiplied by `eta_scale`; the baselines use
/// `eta_scale / (2L)` and `eta_scale / (4L)`.
#[allow(clippy::too_many_arguments)]
pub fn curve(
    solver: &str,
    kind: &str,
    dim: usize,
    seed: u64,
    batch: usize,
    eta_scale: f64,
    max_ops: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if !(eta_scale.is_finite() && eta_scale > 0.0) {
        return Err(format!("eta_scale must be positive, got {eta_scale}"));
    }
    if !(max_ops.is_finite() && max_ops > 0.0 && max_ops <= MAX_OPS) {
        return Err(format!("max_ops must lie in (0, {MAX_OPS}], got {max_ops}"));
    }
    let (game, p) = build_game(kind, dim, seed)?;
    let lip = p.lipschitz();
    let x0 = p.default_start();
    let (mut s, ops_per_iter): (Box<dyn Solver>, f64) = match solver {
        "ommb" => {
            let mut params = tune_oracle_optimal(lip.l, lip.l_bar, batch, p.num_components())
                .map_err(|e| e.to_string())?
                .into_params(u64::MAX, seed);
            params.eta *= eta_scale;
            let per = (3 * batch) as f64 / p.num_components() as f64 + params.prob;
            (Box::new(Ommb::new(p.clone(), params, &x0).map_err(|e| e.to_string())?), per)
        }
        "eg" => (
            Box::new(ExtraGradient::new(p.clone(), eta_scale * 0.5 / lip.l, &x0).map_err(|e| e.to_string())?),
            2.0,
        ),
        "popov" => (
            Box::new(Popov::new(p.clone(), eta_scale * 0.25 / lip.l, &x0).map_err(|e| e.to_string())?),
            1.0,
        ),
        other => return Err(format!("unknown solver `{other}` (ommb, eg, popov)")),
    };
    let cadence = ((max_ops / ops_per_iter) / points.max(1) as f64).ceil().max(1.0) as u64;
    let stop = StopCriteria {
        max_iters: u64::MAX,
        max_ops: Some(max_ops),
        target_gap: None,
    };
    let opts = RunOptions::new(stop).cadence(cadence).record_time(false);
    let out = run_solver(s.as_mut(), &p, Some(&*game), &opts, &mut Rng::seed_from_u64(seed), None)
        .map_err(|e| e.to_string())?;
    Ok(out.rows.iter().flat_map(|r| [r.matvec_ops, r.gap_avg]).collect())
}

/// Row-major entries of a generated `dim x dim` matrix.
pub fn matrix_entries(kind: &str, dim: usize, seed: u64) -> Result<Vec<f64>, String> {
    let (game, _) = build_game(kind, dim, seed)?;
    Ok(game.matrix().data().to_vec())
}

#[wasm_bindgen(js_name = convergenceCurve)]
#[allow(clippy::too_many_arguments)]
pub fn convergence_curve(
    solver: &str,
    kind: &str,
    dim: usize,
    seed: u32,
    batch: usize,
    eta_scale: f64,
    max_ops: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    curve(solver, kind, dim, u64::from(seed), batch, eta_scale, max_ops, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = projectSimplex)]
pub fn project_simplex(values: Vec<f64>) -> Result<Vec<f64>, JsError> {
    vibench_core::prox::project_simplex(&values).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = matrixHeatmap)]
pub fn matrix_heatmap(kind: &str, dim: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    matrix_entries(kind, dim, u64::from(seed)).map_err(|e| JsError::new(&e))
}
