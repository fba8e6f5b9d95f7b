//! Symmetric tridiagonal eigenproblems `A x = lambda B x` by Sturm bisection
//! and inverse iteration. `B` is symmetric positive definite and tridiagonal;
//! the standard problem is the case `B = I`.

use crate::error::{Error, Result};

/// Eigenvalues closer than this are reported as a degenerate spectrum.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Symmetric tridiagonal matrix with `diag.len() == off.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Parameter(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: vec![1.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Gershgorin interval containing every eigenvalue.
    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }
}

/// Lowest eigenpairs of a tridiagonal pencil.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
}

/// Number of eigenvalues of the pencil strictly below `x`: the negative pivots
/// of the `LDL^T` factorization of `A - x B`.
pub fn sturm_count(a: &SymTridiagonal, b: &SymTridiagonal, x: f64) -> usize {
    let n = a.dim();
    let mut count = 0;
    let mut d = a.diag[0] - x * b.diag[0];
    let tiny = f64::MIN_POSITIVE.sqrt();
    for i in 0..n {
        if i > 0 {
            let e = a.off[i - 1] - x * b.off[i - 1];
            d = a.diag[i] - x * b.diag[i] - e * e / d;
        }
        if d == 0.0 {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Bounds for the pencil spectrum from the Gershgorin discs of `A` and the
/// smallest Gershgorin estimate of `B`.
fn pencil_bounds(a: &SymTridiagonal, b: &SymTridiagonal) -> Result<(f64, f64)> {
    let (alo, ahi) = a.gershgorin();
    let (blo, bhi) = b.gershgorin();
    if blo > 0.0 {
        let cands = [alo / blo, alo / bhi, ahi / blo, ahi / bhi];
        let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Ok((lo - 1e-12 * lo.abs() - 1e-300, hi + 1e-12 * hi.abs() + 1e-300));
    }
    // Fall back to expanding until the Sturm counts bracket the spectrum.
    let n = a.dim();
    let mut r = ahi.abs().max(alo.abs()).max(1.0);
    for _ in 0..200 {
        if sturm_count(a, b, -r) == 0 && sturm_count(a, b, r) == n {
            return Ok((-r, r));
        }
        r *= 2.0;
    }
    Err(Error::NotPositiveDefinite { row: 0, pivot: blo })
}

/// The `k`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
fn bisect(a: &SymTridiagonal, b: &SymTridiagonal, k: usize, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves a general tridiagonal system with partial pivoting.
/// `sub`, `dia`, `sup` are the sub-, main and super-diagonals.
pub fn solve_tridiagonal(sub: &[f64], dia: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = dia.len();
    if n == 1 {
        return vec![rhs[0] / nonzero(dia[0])];
    }
    // Row i holds entries at columns i, i+1, i+2 after elimination.
    let mut d = dia.to_vec();
    let mut du = sup.to_vec();
    du.push(0.0);
    let mut du2 = vec![0.0; n];
    let mut dl = sub.to_vec();
    let mut x = rhs.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let f = dl[i] / nonzero(d[i]);
            d[i + 1] -= f * du[i];
            x[i + 1] -= f * x[i];
            dl[i] = f;
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            du[i] = tmp;
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            x.swap(i, i + 1);
            x[i + 1] -= f * x[i];
            dl[i] = f;
        }
    }
    let last = n - 1;
    x[last] /= nonzero(d[last]);
    x[last - 1] = (x[last - 1] - du[last - 1] * x[last]) / nonzero(d[last - 1]);
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / nonzero(d[i]);
    }
    x
}

fn nonzero(v: f64) -> f64 {
    if v == 0.0 {
        f64::EPSILON * f64::EPSILON
    } else {
        v
    }
}

/// Lowest `count` eigenpairs of `A x = lambda B x`.
///
/// Eigenvalues within [`TIE_TOLERANCE`] (relative to `max(1, |lambda|)`) of
/// each other are rejected with [`Error::DegenerateSpectrum`].
pub fn lowest_eigenpairs(a: &SymTridiagonal, b: &SymTridiagonal, count: usize) -> Result<TridiagonalEigen> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Parameter("pencil dimensions differ".into()));
    }
    if count == 0 || count > n {
        return Err(Error::Parameter(format!(
            "requested {count} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let (lo, hi) = pencil_bounds(a, b)?;
    let mut values = Vec::with_capacity(count);
    let mut start = lo;
    for k in 0..count {
        let v = bisect(a, b, k, start, hi);
        values.push(v);
        start = lo.max(v - 1e-12 * v.abs().max(1.0));
    }
    for k in 1..count {
        let gap = values[k] - values[k - 1];
        if gap <= TIE_TOLERANCE * values[k].abs().max(1.0) {
            return Err(Error::DegenerateSpectrum {
                index: k - 1,
                next: k,
                gap,
            });
        }
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (k, &lam) in values.iter().enumerate() {
        let scale = lam.abs().max(1.0);
        let shift = lam + 1e-13 * scale;
        let sub: Vec<f64> = a.off.iter().zip(&b.off).map(|(x, y)| x - shift * y).collect();
        let dia: Vec<f64> = a.diag.iter().zip(&b.diag).map(|(x, y)| x - shift * y).collect();
        // deterministic start vector with components in every mode
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i * 7 + k * 13) % 11) as f64 / 11.0)
            .collect();
        for _ in 0..4 {
            let rhs = b.matvec(&v);
            v = solve_tridiagonal(&sub, &dia, &sub, &rhs);
            // keep B-orthogonality against previously found close modes
            for prev in vectors.iter() {
                let c = b.dot(prev, &v);
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= c * pi;
                }
            }
            let norm = b.dot(&v, &v).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::NoConvergence {
                    solver: "tridiagonal inverse iteration",
                    iterations: 4,
                    residual: f64::NAN,
                });
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
        }
        vectors.push(v);
    }
    Ok(TridiagonalEigen { values, vectors })
}
