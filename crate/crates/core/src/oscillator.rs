//! Finite-difference eigensolver for one-dimensional Schrödinger operators
//! `-d^2/dy^2 + V(y)` with Dirichlet ends, and the matrix elements
//! `a_nsk = <H_n psi_s, psi_k>` built on its eigenfunctions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PolynomialPotential;
use crate::tridiag::{lowest_eigenpairs, SymTridiagonal};

/// Uniform grid of `n` points on `[left, right]`, ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub left: f64,
    pub right: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(left: f64, right: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Parameter(format!("grid needs at least 3 points, got {n}")));
        }
        if !(left < right) || !left.is_finite() || !right.is_finite() {
            return Err(Error::Parameter(format!("bad grid interval [{left}, {right}]")));
        }
        Ok(Self { left, right, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.right - self.left) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.right
        } else {
            self.left + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Same interval with spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n: 2 * self.n - 1,
            ..*self
        }
    }
}

/// Lowest Dirichlet eigenpairs on a [`Grid1D`]. Eigenfunctions are sampled on
/// every grid point (zero at the ends) and normalized in the trapezoid rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult1D {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub grid: Grid1D,
}

impl SpectralResult1D {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Trapezoid inner product of two sampled functions.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        trapezoid(self.grid.spacing(), &u.iter().zip(v).map(|(a, b)| a * b).collect::<Vec<_>>())
    }

    pub fn gram(&self) -> Vec<Vec<f64>> {
        let j = self.len();
        (0..j)
            .map(|a| {
                (0..j)
                    .map(|b| self.inner(&self.eigenfunctions[a], &self.eigenfunctions[b]))
                    .collect()
            })
            .collect()
    }
}

/// Solves `-psi'' + V psi = mu psi` on `grid` with `psi = 0` at both ends,
/// by the 3-point scheme, returning the lowest `count` eigenpairs.
pub fn solve_on_grid<V: Fn(f64) -> f64>(potential: V, grid: Grid1D, count: usize) -> Result<SpectralResult1D> {
    let interior = grid.n - 2;
    if count == 0 || count > interior {
        return Err(Error::Parameter(format!(
            "cannot take {count} modes from a grid with {interior} interior points"
        )));
    }
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = (1..=interior).map(|i| 2.0 * inv_h2 + potential(grid.point(i))).collect();
    let off = vec![-inv_h2; interior - 1];
    let a = SymTridiagonal::new(diag, off)?;
    let eig = lowest_eigenpairs(&a, &SymTridiagonal::identity(interior), count)?;

    let norm = h.sqrt();
    let eigenfunctions = eig
        .vectors
        .into_iter()
        .map(|v| {
            let mut psi = Vec::with_capacity(grid.n);
            psi.push(0.0);
            psi.extend(v.iter().map(|x| x / norm));
            psi.push(0.0);
            fix_sign(&mut psi);
            psi
        })
        .collect();
    Ok(SpectralResult1D {
        eigenvalues: eig.values,
        eigenfunctions,
        grid,
    })
}

/// Polynomial-potential solver on the box `[-box_left, box_right]` with `n` points.
pub fn solve_schrodinger_1d(
    potential: &PolynomialPotential,
    box_halfwidths: (f64, f64),
    n: usize,
    count: usize,
) -> Result<SpectralResult1D> {
    let grid = Grid1D::new(-box_halfwidths.0, box_halfwidths.1, n)?;
    solve_on_grid(|y| potential.eval(y), grid, count)
}

/// Makes the function positive at its first interior local extremum.
fn fix_sign(psi: &mut [f64]) {
    let n = psi.len();
    for i in 1..n - 1 {
        let a = psi[i].abs();
        if a > 0.0 && a >= psi[i - 1].abs() && a >= psi[i + 1].abs() {
            if psi[i] < 0.0 {
                psi.iter_mut().for_each(|v| *v = -*v);
            }
            return;
        }
    }
}

/// Eigenvalues extrapolated from two grids with spacing ratio 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RichardsonEstimate {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

/// `(4 fine - coarse)/3` with error estimate `|fine - coarse|/3`.
pub fn richardson_pair(coarse: &[f64], fine: &[f64]) -> RichardsonEstimate {
    let values = coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let errors = coarse.iter().zip(fine).map(|(c, f)| (f - c).abs() / 3.0).collect();
    RichardsonEstimate {
        values,
        errors,
        coarse: coarse.to_vec(),
        fine: fine.to_vec(),
    }
}

/// Solves on `n` and `2n - 1` points and extrapolates away the `O(h^2)` error.
pub fn richardson_refine<V: Fn(f64) -> f64 + Copy>(
    potential: V,
    grid: Grid1D,
    count: usize,
) -> Result<RichardsonEstimate> {
    let coarse = solve_on_grid(potential, grid, count)?;
    let fine = solve_on_grid(potential, grid.refined(), count)?;
    Ok(richardson_pair(&coarse.eigenvalues, &fine.eigenvalues))
}

/// Smallest `L` on the ladder `1, 2, 4, ...` with
/// `d * exp(-sqrt(a0 a1) L^2 / 2) < tol`.
pub fn select_box_halfwidth(a0a1: f64, d: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if !(a0a1 > 0.0) {
        return Err(Error::Parameter(format!("decay constant must be positive, got {a0a1}")));
    }
    let rate = 0.5 * a0a1.sqrt();
    let mut l = 1.0;
    while d.abs() * (-rate * l * l).exp() >= tol {
        l *= 2.0;
        if l > 1e6 {
            return Err(Error::Parameter("box half-width ladder exhausted".into()));
        }
    }
    Ok(l)
}

/// Clips a symmetric half-width to the stretched interval
/// `[-l1/delta, l2/delta]`.
pub fn clip_box(halfwidth: f64, l1: f64, l2: f64, delta: f64) -> (f64, f64) {
    (halfwidth.min(l1 / delta), halfwidth.min(l2 / delta))
}

/// Pointwise Gaussian tail bound for one eigenfunction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub index: usize,
    /// Turning radius where `V(y0) = 2 mu`.
    pub turning_point: f64,
    /// Smallest `D` with `|psi| <= D exp(-sqrt(a0 a1) y^2 / 2)` beyond `y0`.
    pub required_d: f64,
    pub max_abs: f64,
    pub holds: bool,
}

/// Samples below this fraction of `max|psi|` are round-off and carry no
/// decay information.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Checks `|psi_j(y)| <= D exp(-sqrt(a0 a1) y^2 / 2)` for `|y| >= y0` with
/// `D <= 10 max|psi_j|`, on samples above [`ROUNDOFF_FLOOR`].
pub fn decay_certificate<V: Fn(f64) -> f64>(result: &SpectralResult1D, potential: V, a0a1: f64) -> Vec<DecayCertificate> {
    let rate = 0.5 * a0a1.sqrt();
    let ys = result.grid.points();
    result
        .eigenvalues
        .iter()
        .zip(&result.eigenfunctions)
        .enumerate()
        .map(|(index, (mu, psi))| {
            let level = 2.0 * mu;
            let turning_point = ys
                .iter()
                .filter(|y| **y >= 0.0 && potential(**y) >= level)
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let turning_point = turning_point.max(
                ys.iter()
                    .filter(|y| **y <= 0.0 && potential(**y) >= level)
                    .map(|y| -y)
                    .fold(f64::INFINITY, f64::min),
            );
            let max_abs = psi.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let required_d = ys
                .iter()
                .zip(psi)
                .filter(|(y, p)| y.abs() >= turning_point && p.abs() > ROUNDOFF_FLOOR * max_abs)
                .map(|(y, p)| p.abs() * (rate * y * y).exp())
                .fold(0.0_f64, f64::max);
            DecayCertificate {
                index,
                turning_point,
                required_d,
                max_abs,
                holds: required_d <= 10.0 * max_abs,
            }
        })
        .collect()
}

fn trapezoid(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

/// Composite Simpson rule on uniform samples; an even point count closes
/// with the 3/8 rule on the last three intervals.
pub fn simpson(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (f[0] + f[1]),
        3 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ => {
            let (body, tail) = if n % 2 == 1 { (n, 0.0) } else { (n - 3, three_eighths(h, &f[n - 4..])) };
            let mut s = f[0] + f[body - 1];
            for (i, v) in f.iter().enumerate().take(body - 1).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0 + tail
        }
    }
}

fn three_eighths(h: f64, f: &[f64]) -> f64 {
    3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3])
}

/// `a_nsk = <H_n psi_s, psi_k>` for `n = 1..N`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixElementTable {
    /// `entries[n - 1][s][k]`.
    pub entries: Vec<Vec<Vec<f64>>>,
}

impl MatrixElementTable {
    pub fn orders(&self) -> usize {
        self.entries.len()
    }

    pub fn basis_size(&self) -> usize {
        self.entries.first().map_or(0, |e| e.len())
    }

    pub fn get(&self, n: usize, s: usize, k: usize) -> f64 {
        self.entries[n - 1][s][k]
    }

    /// Largest `|a_nsk - a_nks|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for e in &self.entries {
            for (s, row) in e.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    worst = worst.max((v - e[k][s]).abs());
                }
            }
        }
        worst
    }
}

/// Simpson quadrature of `H_n psi_s psi_k` on the eigenfunction grid.
pub fn matrix_elements(result: &SpectralResult1D, potentials: &[PolynomialPotential]) -> MatrixElementTable {
    let ys = result.grid.points();
    let h = result.grid.spacing();
    let psi = &result.eigenfunctions;
    let size = psi.len();
    let entries = potentials
        .iter()
        .map(|pot| {
            let v: Vec<f64> = ys.iter().map(|y| pot.eval(*y)).collect();
            let mut block = vec![vec![0.0; size]; size];
            for s in 0..size {
                let vs: Vec<f64> = v.iter().zip(&psi[s]).map(|(a, b)| a * b).collect();
                for k in s..size {
                    let f: Vec<f64> = vs.iter().zip(&psi[k]).map(|(a, b)| a * b).collect();
                    let val = simpson(h, &f);
                    block[s][k] = val;
                    block[k][s] = val;
                }
            }
            block
        })
        .collect();
    MatrixElementTable { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_ladder() {
        let pot = PolynomialPotential::monomial(2, 1.0);
        let res = solve_schrodinger_1d(&pot, (12.0, 12.0), 4001, 4).unwrap();
        for (j, mu) in res.eigenvalues.iter().enumerate().take(3) {
            assert!((mu - (2 * j + 1) as f64).abs() < 5e-5, "{j}: {mu}");
        }
    }

    #[test]
    fn harmonic_error_matches_leading_truncation_term() {
        // 3-point scheme: mu_h - mu = -h^2 <p^4> / 12 + O(h^4), <p^4>_j = 3 (2j^2 + 2j + 1) / 4
        let pot = PolynomialPotential::monomial(2, 1.0);
        let res = solve_schrodinger_1d(&pot, (12.0, 12.0), 4001, 4).unwrap();
        let h = res.grid.spacing();
        for (j, mu) in res.eigenvalues.iter().enumerate() {
            let jf = j as f64;
            let predicted = -h * h * 0.75 * (2.0 * jf * jf + 2.0 * jf + 1.0) / 12.0;
            let err = mu - (2 * j + 1) as f64;
            assert!((err - predicted).abs() < 0.01 * predicted.abs(), "{j}: {err} vs {predicted}");
        }
    }

    #[test]
    fn dirichlet_box_modes() {
        let res = solve_on_grid(|_| 0.0, Grid1D::new(0.0, PI, 4001).unwrap(), 3).unwrap();
        for (j, mu) in res.eigenvalues.iter().enumerate() {
            let k = (j + 1) as f64;
            assert!((mu - k * k).abs() < 5e-5);
        }
    }

    #[test]
    fn richardson_on_harmonic_ground_state() {
        let grid = Grid1D::new(-12.0, 12.0, 2001).unwrap();
        let est = richardson_refine(|y| y * y, grid, 1).unwrap();
        assert!((est.values[0] - 1.0).abs() < 1e-8, "{}", est.values[0]);
    }

    #[test]
    fn richardson_fixed_point() {
        let est = richardson_pair(&[2.5, 3.0], &[2.5, 3.0]);
        assert_eq!(est.values, vec![2.5, 3.0]);
        assert_eq!(est.errors, vec![0.0, 0.0]);
    }

    #[test]
    fn eigenfunctions_are_orthonormal_and_signed() {
        let res = solve_on_grid(|y| y.powi(4), Grid1D::new(-6.0, 6.0, 1201).unwrap(), 5).unwrap();
        let g = res.gram();
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-10);
            }
        }
        for psi in &res.eigenfunctions {
            let first = psi
                .windows(3)
                .find(|w| w[1].abs() >= w[0].abs() && w[1].abs() >= w[2].abs() && w[1] != 0.0)
                .unwrap();
            assert!(first[1] > 0.0);
        }
    }

    #[test]
    fn ladder_matrix_element() {
        let pot = PolynomialPotential::monomial(2, 1.0);
        let res = solve_schrodinger_1d(&pot, (12.0, 12.0), 8001, 2).unwrap();
        let t = matrix_elements(&res, &[PolynomialPotential::monomial(1, 1.0)]);
        assert!((t.get(1, 0, 1).abs() - 0.5_f64.sqrt()).abs() < 1e-6);
        assert!(t.get(1, 0, 0).abs() < 1e-10);
        assert!(t.asymmetry() < 1e-14);
    }

    #[test]
    fn parity_zeros_and_zero_potential() {
        let pot = PolynomialPotential::monomial(2, 1.0);
        let res = solve_schrodinger_1d(&pot, (10.0, 10.0), 2001, 4).unwrap();
        let t = matrix_elements(&res, &[PolynomialPotential::zero(), PolynomialPotential::monomial(3, 1.0)]);
        for s in 0..4 {
            for k in 0..4 {
                assert_eq!(t.get(1, s, k), 0.0);
                if (s + k) % 2 == 0 {
                    assert!(t.get(2, s, k).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn box_selection_examples() {
        assert_eq!(select_box_halfwidth(1.0, 1.0, 1e-12).unwrap(), 8.0);
        assert_eq!(select_box_halfwidth(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(select_box_halfwidth(1.0, 1.0, 0.0).is_err());
        assert_eq!(clip_box(8.0, 1.0, 1.0, 0.25_f64.sqrt()), (2.0, 2.0));
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [5usize, 6, 7, 10] {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(h, &f) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn harmonic_states_decay_as_certified() {
        let res = solve_on_grid(|y| y * y, Grid1D::new(-10.0, 10.0, 2001).unwrap(), 4).unwrap();
        for c in decay_certificate(&res, |y| y * y, 0.5) {
            assert!(c.holds, "{c:?}");
        }
    }

    #[test]
    fn too_many_modes_is_a_parameter_error() {
        let grid = Grid1D::new(0.0, 1.0, 5).unwrap();
        assert!(matches!(solve_on_grid(|_| 0.0, grid, 4), Err(Error::Parameter(_))));
    }
}
