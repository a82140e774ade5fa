//! Bilinear zero-sum matrix games `min_{x in simplex} max_{y in simplex} x^T A y`
//! as finite-sum VIs.
//!
//! The operator is `F(x, y) = (A y, -A^T x)`. It is split into `d` paired
//! column/row summands
//!
//! ```text
//! F_j(x, y) = d * (A[:, j] * y_j, -x_j * A[j, :]^T)
//! ```
//!
//! so one index updates both blocks, `(1/d) sum_j F_j = F`, and evaluating a
//! summand reads one column and one row (`1/d` of a matvec pair).

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::prox::BlockProduct;
use crate::rng::Rng;
use crate::vi::{LipschitzData, Operator, Problem};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
                context: "matrix data",
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::param("rows", "ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `out = self * v`
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.data)
    }

    /// FNV-1a over the little-endian bytes of the dimensions and entries.
    pub fn digest(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.rows as u64).to_le_bytes());
        eat(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            eat(&v.to_le_bytes());
        }
        h
    }

    /// Largest singular value by power iteration.
    pub fn spectral_norm(&self) -> Result<f64> {
        let t = self.transpose();
        linalg::spectral_norm(
            self.rows,
            self.cols,
            |v, out| self.matvec_into(v, out),
            |u, out| t.matvec_into(u, out),
            0x5eed,
        )
    }
}

/// Text serialization: a `d d` header, then one line of space-separated
/// values per row, 17 significant digits. Lines starting with `#` are
/// comments.
pub fn format_matrix(a: &Matrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", a.rows, a.cols);
    for i in 0..a.rows {
        let line: Vec<String> = a.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());

    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "missing `d d` header".into(),
    })?;
    let dims: Vec<(usize, &str)> = tokens(header).collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            column: 1,
            message: format!("header must have two fields, found {}", dims.len()),
        });
    }
    let parse_dim = |(col, tok): (usize, &str)| {
        tok.parse::<usize>().map_err(|e| Error::Parse {
            line: hline,
            column: col,
            message: format!("bad dimension `{tok}`: {e}"),
        })
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;
    if rows != cols || rows == 0 {
        return Err(Error::Parse {
            line: hline,
            column: 1,
            message: format!("expected a non-empty square matrix, header says {rows}x{cols}"),
        });
    }

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    let mut last_line = hline;
    for (lno, line) in lines {
        last_line = lno;
        if seen_rows == rows {
            return Err(Error::Parse {
                line: lno,
                column: 1,
                message: format!("more than the {rows} rows declared in the header"),
            });
        }
        let mut count = 0;
        for (col, tok) in tokens(line) {
            let v: f64 = tok.parse().map_err(|e| Error::Parse {
                line: lno,
                column: col,
                message: format!("bad number `{tok}`: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lno,
                    column: col,
                    message: format!("non-finite entry `{tok}`"),
                });
            }
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::Parse {
                line: lno,
                column: 1,
                message: format!("row has {count} entries, header says {cols}"),
            });
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::Parse {
            line: last_line + 1,
            column: 1,
            message: format!("found {seen_rows} rows, header says {rows}"),
        });
    }
    Matrix::new(rows, cols, data)
}

/// Whitespace-separated tokens with their 1-based starting column.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split(' ')
        .scan(1usize, |col, tok| {
            let start = *col;
            *col += tok.len() + 1;
            Some((start, tok))
        })
        .filter(|(_, t)| !t.is_empty())
}

pub fn save_matrix(a: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_matrix(a))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    PolicemanBurglar,
    UniformGrid,
    SeededGaussian,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "policeman-burglar" => Ok(Self::PolicemanBurglar),
            "uniform-grid" => Ok(Self::UniformGrid),
            "seeded-gaussian" | "gaussian" => Ok(Self::SeededGaussian),
            other => Err(Error::param(
                "kind",
                format!("unknown generator `{other}` (policeman-burglar, uniform-grid, seeded-gaussian)"),
            )),
        }
    }
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PolicemanBurglar => "policeman-burglar",
            Self::UniformGrid => "uniform-grid",
            Self::SeededGaussian => "seeded-gaussian",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_THETA: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, dim: usize, seed: u64) -> Self {
        Self {
            kind,
            dim,
            seed,
            theta: DEFAULT_THETA,
        }
    }
}

/// Deterministic test matrices.
///
/// * policeman–burglar: `A_ij = w_i (1 - exp(-theta |i - j|))`, `w_i = |z_i|`
///   with `z_i` standard normal from the seeded stream.
/// * uniform grid: `A_ij = (i + j - 1) / (2d - 1)` with 1-based indices;
///   the seed is ignored.
/// * seeded Gaussian: i.i.d. standard normal entries, row-major draw order.
pub fn generate_matrix(spec: &GeneratorSpec) -> Result<Matrix> {
    let d = spec.dim;
    if d < 2 {
        return Err(Error::param("dim", format!("must be at least 2, got {d}")));
    }
    let mut rng = Rng::seed_from_u64(spec.seed);
    let data = match spec.kind {
        GeneratorKind::PolicemanBurglar => {
            if !(spec.theta.is_finite() && spec.theta > 0.0) {
                return Err(Error::param("theta", format!("must be positive, got {}", spec.theta)));
            }
            let w: Vec<f64> = (0..d).map(|_| rng.normal().abs()).collect();
            let mut a = Vec::with_capacity(d * d);
            for (i, wi) in w.iter().enumerate() {
                for j in 0..d {
                    let gap = (i as f64 - j as f64).abs();
                    a.push(wi * (1.0 - (-spec.theta * gap).exp()));
                }
            }
            a
        }
        GeneratorKind::UniformGrid => {
            let denom = (2 * d - 1) as f64;
            (0..d)
                .flat_map(|i| (0..d).map(move |j| (i + j + 1) as f64 / denom))
                .collect()
        }
        GeneratorKind::SeededGaussian => rng.normal_vec(d * d),
    };
    Matrix::new(d, d, data)
}

/// A square matrix game with its transpose, norm caches and Lipschitz data.
#[derive(Debug, Clone)]
pub struct MatrixGame {
    a: Matrix,
    at: Matrix,
    col_norms: Vec<f64>,
    row_norms: Vec<f64>,
    lipschitz: LipschitzData,
}

impl MatrixGame {
    pub fn new(a: Matrix) -> Result<Self> {
        if a.rows != a.cols || a.rows == 0 {
            return Err(Error::param("A", format!("game matrix must be square, got {}x{}", a.rows, a.cols)));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("game matrix"));
        }
        let at = a.transpose();
        let col_norms = (0..a.cols).map(|j| norm(at.row(j))).collect();
        let row_norms = (0..a.rows).map(|i| norm(a.row(i))).collect();
        let mut game = Self {
            a,
            at,
            col_norms,
            row_norms,
            lipschitz: LipschitzData::from_parts_unchecked(0.0, vec![], 0.0),
        };
        game.lipschitz = component_lipschitz(&game)?;
        Ok(game)
    }

    pub fn size(&self) -> usize {
        self.a.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn col_norms(&self) -> &[f64] {
        &self.col_norms
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn lipschitz(&self) -> &LipschitzData {
        &self.lipschitz
    }

    /// `A y`
    pub fn a_times(&self, y: &[f64]) -> Vec<f64> {
        self.a.matvec(y)
    }

    /// `A^T x`
    pub fn at_times(&self, x: &[f64]) -> Vec<f64> {
        self.at.matvec(x)
    }

    /// The game as a finite-sum VI over the product of two simplices.
    pub fn to_problem(self: &Arc<Self>) -> Result<Problem> {
        let d = self.size();
        Problem::new(
            self.clone(),
            Arc::new(BlockProduct::simplices(&[d, d])?),
            self.lipschitz.clone(),
        )
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != 2 * self.size() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.size(),
                actual: z.len(),
                context: "game point (x, y)",
            });
        }
        Ok(())
    }

    /// `F(x, y) = (A y, -A^T x)`: one matvec-equivalent operation.
    pub fn operator_full(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_point(z)?;
        let mut out = vec![0.0; z.len()];
        self.full_into(z, &mut out);
        Ok(out)
    }

    /// `F_j(x, y) = d (A[:, j] y_j, -x_j A[j, :])`: `1/d` of an operation.
    pub fn operator_component(&self, j: usize, z: &[f64]) -> Result<Vec<f64>> {
        if j >= self.size() {
            return Err(Error::IndexOutOfRange {
                index: j,
                count: self.size(),
            });
        }
        self.check_point(z)?;
        let mut out = vec![0.0; z.len()];
        self.add_component(j, z, 1.0, &mut out);
        Ok(out)
    }
}

impl Operator for MatrixGame {
    fn dim(&self) -> usize {
        2 * self.size()
    }

    fn num_components(&self) -> usize {
        self.size()
    }

    #[inline]
    fn add_component(&self, j: usize, z: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.size();
        let (x, y) = z.split_at(d);
        let (ox, oy) = out.split_at_mut(d);
        let dj = d as f64 * scale;
        if y[j] != 0.0 {
            linalg::axpy(dj * y[j], self.at.row(j), ox);
        }
        if x[j] != 0.0 {
            linalg::axpy(-dj * x[j], self.a.row(j), oy);
        }
    }

    fn full_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.size();
        let (x, y) = z.split_at(d);
        let (ox, oy) = out.split_at_mut(d);
        self.a.matvec_into(y, ox);
        self.at.matvec_into(x, oy);
        oy.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `L_j = d * max(|A[:, j]|, |A[j, :]|)`, `L_bar` from those and
/// `L = sigma_max(A)`.
pub fn component_lipschitz(game: &MatrixGame) -> Result<LipschitzData> {
    let d = game.size() as f64;
    let per: Vec<f64> = game
        .col_norms
        .iter()
        .zip(&game.row_norms)
        .map(|(c, r)| d * c.max(*r))
        .collect();
    let l = game.a.spectral_norm()?;
    LipschitzData::new(l, per)
}

/// Equilibrium of a 2x2 zero-sum game (row player minimizes).
#[derive(Debug, Clone, PartialEq)]
pub struct SmallGameSolution {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub value: f64,
}

impl SmallGameSolution {
    pub fn stacked(&self) -> Vec<f64> {
        vec![self.x[0], self.x[1], self.y[0], self.y[1]]
    }
}

/// Closed-form solution: a pure saddle (entry maximal in its row and
/// minimal in its column) if one exists, otherwise the equalizing mixed
/// strategies.
pub fn exact_small_game_solution(a: &Matrix) -> Result<SmallGameSolution> {
    if a.rows != 2 || a.cols != 2 {
        return Err(Error::param("A", "expected a 2x2 matrix"));
    }
    let e = |k: usize| if k == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
    for i in 0..2 {
        for j in 0..2 {
            let v = a.get(i, j);
            let row_max = a.get(i, 0).max(a.get(i, 1));
            let col_min = a.get(0, j).min(a.get(1, j));
            if v == row_max && v == col_min {
                return Ok(SmallGameSolution {
                    x: e(i),
                    y: e(j),
                    value: v,
                });
            }
        }
    }
    let (a11, a12, a21, a22) = (a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1));
    let denom = a11 - a12 - a21 + a22;
    let x1 = (a22 - a21) / denom;
    let y1 = (a22 - a12) / denom;
    Ok(SmallGameSolution {
        x: [x1, 1.0 - x1],
        y: [y1, 1.0 - y1],
        value: (a11 * a22 - a12 * a21) / denom,
    })
}
