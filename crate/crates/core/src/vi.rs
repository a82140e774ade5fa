//! Finite-sum variational inequality instances.
//!
//! A [`Problem`] bundles a finite-sum [`Operator`] `F = (1/M) sum_j F_j`, a
//! prox-friendly [`Regularizer`] `g` and the Lipschitz data the step-size
//! rules need. Problems are immutable and cheap to clone; they can be shared
//! read-only across concurrent runs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, dist, dot, norm};
use crate::prox::{BlockProduct, Regularizer};
use crate::rng::Rng;

/// A finite-sum operator over `R^dim` with `num_components` summands.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    fn num_components(&self) -> usize;

    /// `out += scale * F_j(z)`. `j` is zero-based and must be in range.
    fn add_component(&self, j: usize, z: &[f64], scale: f64, out: &mut [f64]);

    /// `out = F(z) = (1/M) sum_j F_j(z)`.
    fn full_into(&self, z: &[f64], out: &mut [f64]);
}

/// Lipschitz constants of `F` and of each summand `F_j`, with
/// `l_bar^2 = mean_j L_j^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzData {
    pub l: f64,
    pub per_component: Vec<f64>,
    pub l_bar: f64,
}

impl LipschitzData {
    pub fn new(l: f64, per_component: Vec<f64>) -> Result<Self> {
        if per_component.is_empty() {
            return Err(Error::param("per_component", "need at least one component"));
        }
        if !(l.is_finite() && l >= 0.0) || per_component.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::param("lipschitz", "constants must be finite and nonnegative"));
        }
        let l_bar = mean_square(&per_component).sqrt();
        Ok(Self { l, per_component, l_bar })
    }

    /// Builds the data without checking consistency. Used to inject
    /// deliberately wrong declarations when exercising the verifier.
    pub fn from_parts_unchecked(l: f64, per_component: Vec<f64>, l_bar: f64) -> Self {
        Self { l, per_component, l_bar }
    }

    /// Human-readable list of violated invariants; empty when consistent.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ms = mean_square(&self.per_component);
        let lb2 = self.l_bar * self.l_bar;
        if (lb2 - ms).abs() > 1e-12 * ms.max(f64::MIN_POSITIVE) && !(lb2 == 0.0 && ms == 0.0) {
            out.push(format!(
                "L_bar^2 = {lb2:e} does not match mean of squared component constants {ms:e}"
            ));
        }
        if self.l > self.l_bar + 1e-12 * self.l_bar {
            out.push(format!("L = {:e} exceeds L_bar = {:e}", self.l, self.l_bar));
        }
        out
    }
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>() / v.len() as f64
}

/// A monotone finite-sum VI instance.
#[derive(Clone)]
pub struct Problem {
    operator: Arc<dyn Operator>,
    regularizer: Arc<dyn Regularizer>,
    lipschitz: LipschitzData,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.dim())
            .field("num_components", &self.num_components())
            .field("regularizer", &self.regularizer)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Problem {
    pub fn new(
        operator: Arc<dyn Operator>,
        regularizer: Arc<dyn Regularizer>,
        lipschitz: LipschitzData,
    ) -> Result<Self> {
        if operator.dim() == 0 || operator.num_components() == 0 {
            return Err(Error::param("operator", "dimension and component count must be positive"));
        }
        if lipschitz.per_component.len() != operator.num_components() {
            return Err(Error::DimensionMismatch {
                expected: operator.num_components(),
                actual: lipschitz.per_component.len(),
                context: "per-component Lipschitz constants",
            });
        }
        if let Some(d) = regularizer.dim() {
            if d != operator.dim() {
                return Err(Error::DimensionMismatch {
                    expected: operator.dim(),
                    actual: d,
                    context: "regularizer dimension",
                });
            }
        }
        Ok(Self {
            operator,
            regularizer,
            lipschitz,
        })
    }

    /// Same problem with different declared constants.
    pub fn with_lipschitz(&self, lipschitz: LipschitzData) -> Self {
        Self {
            lipschitz,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn num_components(&self) -> usize {
        self.operator.num_components()
    }

    pub fn lipschitz(&self) -> &LipschitzData {
        &self.lipschitz
    }

    pub fn operator(&self) -> &Arc<dyn Operator> {
        &self.operator
    }

    pub fn regularizer(&self) -> &Arc<dyn Regularizer> {
        &self.regularizer
    }

    pub fn component(&self, j: usize, z: &[f64]) -> Result<Vec<f64>> {
        let m = self.num_components();
        if j >= m {
            return Err(Error::IndexOutOfRange { index: j, count: m });
        }
        self.check_dim(z)?;
        let mut out = vec![0.0; self.dim()];
        self.operator.add_component(j, z, 1.0, &mut out);
        Ok(out)
    }

    /// `F(z)`. Panics if `z` has the wrong length.
    pub fn full(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim(), "point dimension");
        let mut out = vec![0.0; self.dim()];
        self.operator.full_into(z, &mut out);
        out
    }

    pub fn prox(&self, alpha: f64, x: &[f64]) -> Vec<f64> {
        self.regularizer.prox(alpha, x)
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        self.regularizer.value(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.regularizer.contains(x)
    }

    /// `prox_g(0)`: the barycentre for simplex products, the origin when
    /// unconstrained.
    pub fn default_start(&self) -> Vec<f64> {
        self.prox(1.0, &vec![0.0; self.dim()])
    }

    pub fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: z.len(),
                context: "point",
            });
        }
        Ok(())
    }
}

/// Affine summands `F_j(x) = B_j x + c_j` with dense `d x d` matrices.
///
/// Per-component constants are the spectral norms of `B_j` and `L` the
/// spectral norm of their mean, both by power iteration.
#[derive(Debug, Clone)]
pub struct AffineFiniteSum {
    dim: usize,
    mats: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
}

impl AffineFiniteSum {
    pub fn new(dim: usize, mats: Vec<Vec<f64>>, offsets: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || mats.is_empty() {
            return Err(Error::param("dim", "need positive dimension and at least one component"));
        }
        if mats.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: mats.len(),
                actual: offsets.len(),
                context: "offset count",
            });
        }
        for (b, c) in mats.iter().zip(&offsets) {
            if b.len() != dim * dim {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    actual: b.len(),
                    context: "component matrix",
                });
            }
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                    context: "component offset",
                });
            }
        }
        Ok(Self { dim, mats, offsets })
    }

    /// Gaussian matrices and offsets; not monotone in general.
    pub fn random(dim: usize, components: usize, rng: &mut Rng) -> Result<Self> {
        let mats = (0..components).map(|_| rng.normal_vec(dim * dim)).collect();
        let offsets = (0..components).map(|_| rng.normal_vec(dim)).collect();
        Self::new(dim, mats, offsets)
    }

    /// Monotone summands `B_j = G G^T / d + (H - H^T) / 2` with Gaussian
    /// `G`, `H` and offsets.
    pub fn random_monotone(dim: usize, components: usize, rng: &mut Rng) -> Result<Self> {
        let d = dim;
        let mut mats = Vec::with_capacity(components);
        for _ in 0..components {
            let g = rng.normal_vec(d * d);
            let h = rng.normal_vec(d * d);
            let mut b = vec![0.0; d * d];
            for i in 0..d {
                for k in 0..d {
                    let psd = dot(&g[i * d..(i + 1) * d], &g[k * d..(k + 1) * d]) / d as f64;
                    b[i * d + k] = psd + 0.5 * (h[i * d + k] - h[k * d + i]);
                }
            }
            mats.push(b);
        }
        let offsets = (0..components).map(|_| rng.normal_vec(d)).collect();
        Self::new(dim, mats, offsets)
    }

    pub fn lipschitz(&self) -> Result<LipschitzData> {
        let d = self.dim;
        let per = self
            .mats
            .iter()
            .map(|b| square_spectral_norm(d, b))
            .collect::<Result<Vec<_>>>()?;
        let mut mean = vec![0.0; d * d];
        for b in &self.mats {
            linalg::axpy(1.0 / self.mats.len() as f64, b, &mut mean);
        }
        let l = square_spectral_norm(d, &mean)?;
        LipschitzData::new(l, per)
    }

    pub fn into_problem(self, regularizer: Arc<dyn Regularizer>) -> Result<Problem> {
        let lip = self.lipschitz()?;
        Problem::new(Arc::new(self), regularizer, lip)
    }
}

fn square_spectral_norm(d: usize, a: &[f64]) -> Result<f64> {
    linalg::spectral_norm(
        d,
        d,
        |v, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&a[i * d..(i + 1) * d], v);
            }
        },
        |u, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for (i, &ui) in u.iter().enumerate() {
                linalg::axpy(ui, &a[i * d..(i + 1) * d], out);
            }
        },
        0x5eed,
    )
}

impl Operator for AffineFiniteSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_components(&self) -> usize {
        self.mats.len()
    }

    fn add_component(&self, j: usize, z: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.dim;
        let b = &self.mats[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += scale * (dot(&b[i * d..(i + 1) * d], z) + self.offsets[j][i]);
        }
    }

    fn full_into(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.mats.len() {
            self.add_component(j, z, 1.0, out);
        }
        let inv = 1.0 / self.mats.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }
}

/// Partial gradient callable `(x, y) -> vector`.
pub type PartialGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// One summand `f_j` of a finite-sum saddle function, given by its partial
/// gradients.
#[derive(Clone)]
pub struct SaddleComponent {
    pub grad_x: PartialGradient,
    pub grad_y: PartialGradient,
}

struct SaddleOperator {
    dim_x: usize,
    dim_y: usize,
    components: Vec<SaddleComponent>,
}

impl Operator for SaddleOperator {
    fn dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    fn num_components(&self) -> usize {
        self.components.len()
    }

    fn add_component(&self, j: usize, z: &[f64], scale: f64, out: &mut [f64]) {
        let (x, y) = z.split_at(self.dim_x);
        let c = &self.components[j];
        let gx = (c.grad_x)(x, y);
        let gy = (c.grad_y)(x, y);
        debug_assert_eq!(gx.len(), self.dim_x);
        debug_assert_eq!(gy.len(), self.dim_y);
        let (ox, oy) = out.split_at_mut(self.dim_x);
        linalg::axpy(scale, &gx, ox);
        linalg::axpy(-scale, &gy, oy);
    }

    fn full_into(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let inv = 1.0 / self.components.len() as f64;
        for j in 0..self.components.len() {
            self.add_component(j, z, inv, out);
        }
    }
}

/// VI form of `min_x max_y (1/M) sum_j f_j(x, y) + g1(x) - g2(y)`:
/// `F(x, y) = [grad_x f, -grad_y f]` and `g(x, y) = g1(x) + g2(y)`.
///
/// Gradient output lengths are checked once at `prox_g(0)`.
pub fn make_saddle_problem(
    dim_x: usize,
    dim_y: usize,
    components: Vec<SaddleComponent>,
    g1: Arc<dyn Regularizer>,
    g2: Arc<dyn Regularizer>,
    lipschitz: LipschitzData,
) -> Result<Problem> {
    if components.is_empty() {
        return Err(Error::param("components", "need at least one summand"));
    }
    let reg = BlockProduct::new(vec![(dim_x, g1), (dim_y, g2)])?;
    let probe = reg.prox(1.0, &vec![0.0; dim_x + dim_y]);
    let (px, py) = probe.split_at(dim_x);
    for c in &components {
        let gx = (c.grad_x)(px, py);
        if gx.len() != dim_x {
            return Err(Error::DimensionMismatch {
                expected: dim_x,
                actual: gx.len(),
                context: "grad_x output",
            });
        }
        let gy = (c.grad_y)(px, py);
        if gy.len() != dim_y {
            return Err(Error::DimensionMismatch {
                expected: dim_y,
                actual: gy.len(),
                context: "grad_y output",
            });
        }
    }
    let op = SaddleOperator {
        dim_x,
        dim_y,
        components,
    };
    Problem::new(Arc::new(op), Arc::new(reg), lipschitz)
}

#[derive(Debug, Clone, Default)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Worst observed value of the checked quantity (meaning per check).
    pub worst: f64,
    pub detail: String,
}

/// Result of [`verify_problem`].
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Worst relative error `|F(z) - mean_j F_j(z)| / scale`.
    pub mean_consistency: CheckOutcome,
    /// Worst ratio of observed to declared per-component constant.
    pub component_lipschitz: CheckOutcome,
    /// Worst ratio of observed to declared constant of `F`.
    pub full_lipschitz: CheckOutcome,
    /// Most negative normalized `<F(u) - F(v), u - v>`.
    pub monotonicity: CheckOutcome,
    pub lipschitz_data: CheckOutcome,
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &CheckOutcome); 5] {
        [
            ("mean-consistency", &self.mean_consistency),
            ("component-lipschitz", &self.component_lipschitz),
            ("full-lipschitz", &self.full_lipschitz),
            ("monotonicity", &self.monotonicity),
            ("lipschitz-data", &self.lipschitz_data),
        ]
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, c) in self.checks() {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{tag} {name:<20} worst={:.3e} {}", c.worst, c.detail)?;
        }
        for n in &self.notes {
            writeln!(f, "note {n}")?;
        }
        Ok(())
    }
}

/// Probabilistic check of the structural assumptions on random points of
/// `dom g` (Gaussian draws pushed through `prox_g`).
pub fn verify_problem(problem: &Problem, probes: usize, rng_seed: u64) -> VerifyReport {
    let probes = probes.max(1);
    let mut rng = Rng::seed_from_u64(rng_seed);
    let d = problem.dim();
    let m = problem.num_components();
    let op = problem.operator();
    let lip = problem.lipschitz();
    let sample = |rng: &mut Rng| problem.prox(1.0, &rng.normal_vec(d));

    let mut worst_mean = 0.0_f64;
    let mut worst_comp = 0.0_f64;
    let mut worst_comp_at = 0usize;
    let mut worst_full = 0.0_f64;
    let mut worst_mono = 0.0_f64;
    let mut notes = Vec::new();

    let mut fu_j = vec![0.0; d];
    let mut fv_j = vec![0.0; d];
    for _ in 0..probes {
        let u = sample(&mut rng);
        let v = sample(&mut rng);
        let fu = problem.full(&u);
        let fv = problem.full(&v);

        let mut avg = vec![0.0; d];
        let mut comp_scale = 0.0;
        let uv = dist(&u, &v);
        for j in 0..m {
            fu_j.iter_mut().for_each(|x| *x = 0.0);
            fv_j.iter_mut().for_each(|x| *x = 0.0);
            op.add_component(j, &u, 1.0, &mut fu_j);
            op.add_component(j, &v, 1.0, &mut fv_j);
            linalg::axpy(1.0 / m as f64, &fu_j, &mut avg);
            comp_scale += norm(&fu_j) / m as f64;
            if uv > 0.0 {
                let ratio = dist(&fu_j, &fv_j) / uv;
                let declared = lip.per_component[j];
                let rel = if declared > 0.0 {
                    ratio / declared
                } else if ratio > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                if rel > worst_comp {
                    worst_comp = rel;
                    worst_comp_at = j;
                }
            }
        }
        let scale = norm(&fu).max(comp_scale).max(f64::MIN_POSITIVE);
        worst_mean = worst_mean.max(dist(&fu, &avg) / scale);

        if uv > 0.0 {
            let ratio = dist(&fu, &fv) / uv;
            let rel = if lip.l > 0.0 {
                ratio / lip.l
            } else if ratio > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst_full = worst_full.max(rel);

            let diff: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
            let du: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            let inner = dot(&diff, &du);
            let normalizer = (norm(&diff) * uv).max(1.0);
            worst_mono = worst_mono.min(inner / normalizer);
        }
    }

    let lip_violations = lip.violations();
    if lip.l == 0.0 {
        notes.push("declared L = 0 (operator is constant)".to_string());
    }

    VerifyReport {
        mean_consistency: CheckOutcome {
            passed: worst_mean <= 1e-10,
            worst: worst_mean,
            detail: format!("over {probes} probes"),
        },
        component_lipschitz: CheckOutcome {
            passed: worst_comp <= 1.0 + 1e-8,
            worst: worst_comp,
            detail: format!("observed/declared, worst component {worst_comp_at}"),
        },
        full_lipschitz: CheckOutcome {
            passed: worst_full <= 1.0 + 1e-8,
            worst: worst_full,
            detail: "observed/declared L".to_string(),
        },
        monotonicity: CheckOutcome {
            passed: worst_mono >= -1e-10,
            worst: worst_mono,
            detail: "min <F(u)-F(v),u-v> / max(1, |F(u)-F(v)||u-v|)".to_string(),
        },
        lipschitz_data: CheckOutcome {
            passed: lip_violations.is_empty(),
            worst: lip.l_bar,
            detail: if lip_violations.is_empty() {
                "L_bar consistent".to_string()
            } else {
                lip_violations.join("; ")
            },
        },
        notes,
    }
}
