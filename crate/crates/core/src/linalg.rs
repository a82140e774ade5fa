//! Dense vector helpers.

/// Four interleaved partial sums, combined pairwise; the order is fixed so
/// results are reproducible across runs.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Largest singular value of a `rows x cols` linear map given through
/// `matvec` (`R^cols -> R^rows`) and `rmatvec` (its transpose), by power
/// iteration on `A^T A` from a seeded Gaussian start. Stops when the
/// estimate changes by at most [`POWER_TOL`] relative.
pub fn spectral_norm(
    rows: usize,
    cols: usize,
    matvec: impl Fn(&[f64], &mut [f64]),
    rmatvec: impl Fn(&[f64], &mut [f64]),
    seed: u64,
) -> crate::Result<f64> {
    let mut rng = crate::rng::Rng::seed_from_u64(seed);
    let mut v = rng.normal_vec(cols);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut u = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        matvec(&v, &mut u);
        let next = norm(&u);
        if next == 0.0 {
            return Ok(0.0);
        }
        if (next - sigma).abs() <= POWER_TOL * next {
            return Ok(next);
        }
        sigma = next;
        rmatvec(&u, &mut v);
        let nv = norm(&v);
        if nv == 0.0 {
            return Ok(sigma);
        }
        v.iter_mut().for_each(|x| *x /= nv);
    }
    Err(crate::Error::PowerIteration {
        iterations: POWER_MAX_ITERS,
        estimate: sigma,
    })
}
