//! Eigenvalue branch `nu(d) = mu_j + sum_n q_n d^n` of `H0 + sum_n d^n V_n` in a
//! truncated eigenbasis of `H0`, by Rayleigh–Schrödinger recursion, with a
//! brute-force diagonalize-and-fit route as the independent check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::MatrixElementTable;
use crate::tridiag::TIE_TOLERANCE;

/// `H0 = diag(h0_diag)` plus symmetric perturbations `V_1..V_N`.
#[derive(Debug, Clone)]
pub struct DensePerturbationProblem {
    pub h0_diag: Vec<f64>,
    pub v_orders: Vec<DMatrix<f64>>,
}

impl DensePerturbationProblem {
    pub fn new(h0_diag: Vec<f64>, v_orders: Vec<DMatrix<f64>>) -> Result<Self> {
        let s = h0_diag.len();
        for (n, v) in v_orders.iter().enumerate() {
            if v.nrows() != s || v.ncols() != s {
                return Err(Error::Parameter(format!(
                    "V_{} is {}x{}, expected {s}x{s}",
                    n + 1,
                    v.nrows(),
                    v.ncols()
                )));
            }
            let asym = (v - v.transpose()).amax();
            if asym > 1e-12 * v.amax().max(1.0) {
                return Err(Error::Parameter(format!("V_{} is not symmetric ({asym:e})", n + 1)));
            }
        }
        Ok(Self { h0_diag, v_orders })
    }

    /// Problem on the oscillator eigenbasis: `V_n = (a_nsk)`.
    pub fn from_table(mu: &[f64], table: &MatrixElementTable) -> Result<Self> {
        let s = table.basis_size().min(mu.len());
        let v = table
            .entries
            .iter()
            .map(|e| {
                let mut m = DMatrix::from_fn(s, s, |i, k| e[i][k]);
                // symmetrize quadrature round-off
                m = (&m + m.transpose()) * 0.5;
                m
            })
            .collect();
        Self::new(mu[..s].to_vec(), v)
    }

    pub fn dim(&self) -> usize {
        self.h0_diag.len()
    }

    pub fn orders(&self) -> usize {
        self.v_orders.len()
    }

    /// `H0 + sum_n d^n V_n`.
    pub fn matrix_at(&self, d: f64) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal(&DVector::from_vec(self.h0_diag.clone()));
        let mut p = 1.0;
        for v in &self.v_orders {
            p *= d;
            h += v * p;
        }
        h
    }

    fn check_simple(&self, j: usize) -> Result<()> {
        if j >= self.dim() {
            return Err(Error::Parameter(format!("level {j} outside basis of size {}", self.dim())));
        }
        let mu = self.h0_diag[j];
        for (s, other) in self.h0_diag.iter().enumerate() {
            if s != j && (other - mu).abs() <= TIE_TOLERANCE {
                return Err(Error::DegenerateSpectrum {
                    index: j.min(s),
                    next: j.max(s),
                    gap: (other - mu).abs(),
                });
            }
        }
        Ok(())
    }
}

/// Random instance: size `2..=max_size`, `1..=max_order` perturbations with
/// entries in `[-1, 1]`, base levels with gaps in `[0.5, 1.5)`.
pub fn random_instance<R: Rng>(rng: &mut R, max_size: usize, max_order: usize) -> DensePerturbationProblem {
    let s = rng.gen_range(2..=max_size.max(2));
    let n = rng.gen_range(1..=max_order.max(1));
    let mut mu = Vec::with_capacity(s);
    let mut level = rng.gen_range(-1.0..1.0);
    for _ in 0..s {
        mu.push(level);
        level += rng.gen_range(0.5..1.5);
    }
    let v = (0..n)
        .map(|_| {
            let mut a = DMatrix::zeros(s, s);
            for i in 0..s {
                for k in i..s {
                    let x: f64 = rng.gen_range(-1.0..=1.0);
                    a[(i, k)] = x;
                    a[(k, i)] = x;
                }
            }
            a
        })
        .collect();
    DensePerturbationProblem { h0_diag: mu, v_orders: v }
}

/// Base eigenvalue and its series coefficients in powers of `eps^exponent_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationExpansion {
    pub base_index: usize,
    pub mu_j: f64,
    pub exponent_step: f64,
    /// `q[n - 1]` is `q_n`.
    pub q: Vec<f64>,
}

impl PerturbationExpansion {
    pub fn order(&self) -> usize {
        self.q.len()
    }

    /// `nu_K = mu_j + sum_{n <= K} q_n eps^(n step)`.
    pub fn nu(&self, eps: f64, k: usize) -> f64 {
        let d = eps.powf(self.exponent_step);
        let mut p = 1.0;
        let mut v = self.mu_j;
        for q in self.q.iter().take(k) {
            p *= d;
            v += q * p;
        }
        v
    }

    /// Expansion re-indexed to a finer grading whose step divides this one:
    /// `q_n` moves to index `n * factor`, zeros elsewhere.
    pub fn regrade(&self, factor: usize) -> Self {
        let mut q = vec![0.0; self.q.len() * factor];
        for (n, v) in self.q.iter().enumerate() {
            q[(n + 1) * factor - 1] = *v;
        }
        Self {
            q,
            exponent_step: self.exponent_step / factor as f64,
            ..self.clone()
        }
    }
}

/// Rayleigh–Schrödinger coefficients `q_1..q_N` for level `j` with intermediate
/// normalization. All orders of `V_p` and all lower-order corrections enter.
pub fn rs_expand(
    problem: &DensePerturbationProblem,
    j: usize,
    order: usize,
    exponent_step: f64,
) -> Result<PerturbationExpansion> {
    problem.check_simple(j)?;
    let s = problem.dim();
    let mu = problem.h0_diag[j];
    let denom: Vec<f64> = problem
        .h0_diag
        .iter()
        .enumerate()
        .map(|(i, m)| if i == j { 0.0 } else { 1.0 / (mu - m) })
        .collect();

    let mut psi: Vec<DVector<f64>> = Vec::with_capacity(order + 1);
    let mut e0 = DVector::zeros(s);
    e0[j] = 1.0;
    psi.push(e0);
    let mut q = Vec::with_capacity(order);
    for n in 1..=order {
        let mut acc = DVector::zeros(s);
        for p in 1..=n.min(problem.orders()) {
            acc += &problem.v_orders[p - 1] * &psi[n - p];
        }
        let en = acc[j];
        q.push(en);
        for p in 1..=n {
            acc -= &psi[n - p] * q[p - 1];
        }
        let next = DVector::from_fn(s, |i, _| acc[i] * denom[i]);
        psi.push(next);
    }
    Ok(PerturbationExpansion {
        base_index: j,
        mu_j: mu,
        exponent_step,
        q,
    })
}

/// Literal closed forms for the first two coefficients:
/// `q1 = -a_1jj`, `q2 = sum_{s != j} a_1sj a_1js / (mu_s - mu_j) - a_2jj`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormQ {
    pub q1: f64,
    pub q2: f64,
}

impl ClosedFormQ {
    /// Values under a global sign convention (`+1` literal, `-1` flipped).
    pub fn signed(&self, sign: f64) -> (f64, f64) {
        (sign * self.q1, sign * self.q2)
    }
}

pub fn closed_form_q1_q2(table: &MatrixElementTable, mu: &[f64], j: usize) -> Result<ClosedFormQ> {
    if table.orders() < 2 {
        return Err(Error::Parameter("closed forms need matrix elements of orders 1 and 2".into()));
    }
    let s = table.basis_size().min(mu.len());
    if j >= s {
        return Err(Error::Parameter(format!("level {j} outside basis of size {s}")));
    }
    let q1 = -table.get(1, j, j);
    let mut sum = 0.0;
    for i in 0..s {
        if i != j {
            sum += table.get(1, i, j) * table.get(1, j, i) / (mu[i] - mu[j]);
        }
    }
    Ok(ClosedFormQ {
        q1,
        q2: sum - table.get(2, j, j),
    })
}

/// Which global sign makes the literal closed forms agree with a reference
/// branch; returned with the mismatch under the chosen sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignConvention {
    pub sign: f64,
    pub mismatch: f64,
    pub mismatch_other: f64,
}

pub fn resolve_sign(closed: &ClosedFormQ, reference_q1: f64, reference_q2: f64) -> SignConvention {
    let err = |s: f64| {
        let (a, b) = closed.signed(s);
        (a - reference_q1).abs().max((b - reference_q2).abs())
    };
    let (plus, minus) = (err(1.0), err(-1.0));
    if plus <= minus {
        SignConvention {
            sign: 1.0,
            mismatch: plus,
            mismatch_other: minus,
        }
    } else {
        SignConvention {
            sign: -1.0,
            mismatch: minus,
            mismatch_other: plus,
        }
    }
}

/// Least-squares polynomial fit to a tracked eigenvalue branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFit {
    /// Fitted `q_1..q_N`.
    pub q: Vec<f64>,
    /// All fitted coefficients including guard orders.
    pub raw: Vec<f64>,
    /// 2-norm condition number of the column-scaled Vandermonde matrix.
    pub condition_number: f64,
    pub residual: f64,
    pub min_overlap: f64,
}

/// Extra fitted orders that absorb the truncation tail; capped by the ladder length.
pub const FIT_GUARD: usize = 10;

/// Overlap below which branch tracking reports a crossing.
pub const OVERLAP_THRESHOLD: f64 = 0.7;

/// Diagonalizes `H0 + sum d^n V_n` along `ladder`, tracks the branch through
/// level `j` by eigenvector overlap starting from the point nearest `d = 0`,
/// and fits `nu(d) - mu_j` with a polynomial of degree `order + FIT_GUARD`
/// (no constant term).
pub fn brute_force_branch_fit(
    problem: &DensePerturbationProblem,
    j: usize,
    ladder: &[f64],
    order: usize,
) -> Result<BranchFit> {
    let guard = FIT_GUARD.min(ladder.len().saturating_sub(order + 1));
    branch_fit_with_guard(problem, j, ladder, order, guard)
}

/// [`brute_force_branch_fit`] with an explicit number of guard orders.
pub fn branch_fit_with_guard(
    problem: &DensePerturbationProblem,
    j: usize,
    ladder: &[f64],
    order: usize,
    guard: usize,
) -> Result<BranchFit> {
    problem.check_simple(j)?;
    let degree = order + guard;
    if ladder.len() < order + 2 || ladder.len() < degree {
        return Err(Error::Parameter(format!(
            "ladder of {} points is too short for order {order}",
            ladder.len()
        )));
    }
    let mut pts: Vec<f64> = ladder.to_vec();
    pts.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    for w in pts.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Parameter("ladder values must be distinct".into()));
        }
    }

    let s = problem.dim();
    let mut reference = DVector::zeros(s);
    reference[j] = 1.0;
    let mut prev_pos: Option<DVector<f64>> = None;
    let mut prev_neg: Option<DVector<f64>> = None;
    let mut samples = Vec::with_capacity(pts.len());
    let mut min_overlap = f64::INFINITY;
    for &d in &pts {
        let eig = SymmetricEigen::new(problem.matrix_at(d));
        let track = if d >= 0.0 { &mut prev_pos } else { &mut prev_neg };
        let target = track.clone().unwrap_or_else(|| reference.clone());
        let (best, overlap) = (0..s)
            .map(|k| (k, eig.eigenvectors.column(k).dot(&target).abs()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        min_overlap = min_overlap.min(overlap);
        if overlap < OVERLAP_THRESHOLD {
            return Err(Error::BranchCrossing { epsilon: d, overlap });
        }
        let mut v = eig.eigenvectors.column(best).into_owned();
        if v.dot(&target) < 0.0 {
            v = -v;
        }
        *track = Some(v);
        samples.push((d, eig.eigenvalues[best] - problem.h0_diag[j]));
    }

    // column-scaled Vandermonde: column n holds (d / dmax)^n
    let dmax = pts.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    let a = DMatrix::from_fn(samples.len(), degree, |r, c| (samples[r].0 / dmax).powi(c as i32 + 1));
    let norms: Vec<f64> = (0..degree).map(|c| a.column(c).norm()).collect();
    let scaled = DMatrix::from_fn(a.nrows(), degree, |r, c| a[(r, c)] / norms[c]);
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|x| x.1));
    let svd = scaled.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let y = svd
        .solve(&b, smax * 1e-15)
        .map_err(|e| Error::Parameter(format!("least-squares solve failed: {e}")))?;
    let residual = (&scaled * &y - &b).norm();
    let raw: Vec<f64> = (0..degree)
        .map(|c| y[c] / norms[c] / dmax.powi(c as i32 + 1))
        .collect();
    Ok(BranchFit {
        q: raw[..order].to_vec(),
        raw,
        condition_number,
        residual,
        min_overlap,
    })
}

/// `count` Chebyshev points `d0 cos(pi (k + 1/2) / count)` on `[-d0, d0]`.
pub fn chebyshev_ladder(d0: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| d0 * (std::f64::consts::PI * (k as f64 + 0.5) / count as f64).cos())
        .collect()
}

/// Ladder used when the caller does not supply one.
pub fn default_fit_ladder() -> Vec<f64> {
    chebyshev_ladder(0.1, 32)
}

/// Symmetric geometric ladder `+-d0 * ratio^i`, `i < count`.
pub fn symmetric_ladder(d0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count)
        .flat_map(|i| {
            let d = d0 * ratio.powi(i as i32);
            [d, -d]
        })
        .collect()
}

/// Predicted model and Laplacian eigenvalues at truncation `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub nu: f64,
    pub lambda: f64,
}

/// `nu_K = mu_j + sum_{n<=K} q_n eps^(n step)` and
/// `Lambda_K = pi^2/(M eps)^2 + eps^(-2 alpha1) nu_K`.
pub fn evaluate_prediction(
    expansion: &PerturbationExpansion,
    max_height: f64,
    alpha1: f64,
    eps: f64,
    k: usize,
) -> Result<Prediction> {
    if k > expansion.order() {
        return Err(Error::Parameter(format!(
            "truncation {k} exceeds expansion order {}",
            expansion.order()
        )));
    }
    let nu = expansion.nu(eps, k);
    let me = max_height * eps;
    let lambda = std::f64::consts::PI.powi(2) / (me * me) + eps.powf(-2.0 * alpha1) * nu;
    Ok(Prediction { nu, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn toy() -> DensePerturbationProblem {
        DensePerturbationProblem::new(vec![0.0, 1.0], vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])])
            .unwrap()
    }

    fn toy_table() -> MatrixElementTable {
        MatrixElementTable {
            entries: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
        }
    }

    #[test]
    fn toy_branch_coefficients() {
        let e = rs_expand(&toy(), 0, 6, 1.0).unwrap();
        let want = [0.0, -1.0, 0.0, 1.0, 0.0, -2.0];
        for (a, b) in e.q.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{:?}", e.q);
        }
    }

    #[test]
    fn zero_perturbation() {
        let p = DensePerturbationProblem::new(vec![0.0, 1.0, 3.0], vec![DMatrix::zeros(3, 3); 3]).unwrap();
        assert!(rs_expand(&p, 1, 4, 1.0).unwrap().q.iter().all(|q| *q == 0.0));
        let fit = brute_force_branch_fit(&p, 1, &default_fit_ladder(), 3).unwrap();
        assert!(fit.q.iter().all(|q| q.abs() < 1e-10));
    }

    #[test]
    fn diagonal_perturbation_decouples() {
        let v1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -0.7, 1.1]));
        let v2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.4, -0.5]));
        let p = DensePerturbationProblem::new(vec![0.0, 1.0, 2.5], vec![v1, v2]).unwrap();
        let e = rs_expand(&p, 1, 3, 1.0).unwrap();
        assert!((e.q[0] + 0.7).abs() < 1e-15);
        assert!((e.q[1] - 0.4).abs() < 1e-15);
        assert!(e.q[2].abs() < 1e-15);
    }

    #[test]
    fn degenerate_base_level_is_rejected() {
        let p = DensePerturbationProblem::new(vec![0.0, 1.0, 1.0], vec![DMatrix::identity(3, 3)]).unwrap();
        assert!(matches!(rs_expand(&p, 1, 2, 1.0), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn toy_fit_recovers_even_coefficients() {
        let fit = brute_force_branch_fit(&toy(), 0, &default_fit_ladder(), 4).unwrap();
        assert!((fit.q[1] + 1.0).abs() < 1e-6, "{:?}", fit.q);
        assert!((fit.q[3] - 1.0).abs() < 1e-6, "{:?}", fit.q);
    }

    #[test]
    fn geometric_symmetric_ladder_fits_toy() {
        let fit = branch_fit_with_guard(&toy(), 0, &symmetric_ladder(0.05, 0.5, 6), 4, 4).unwrap();
        assert!((fit.q[1] + 1.0).abs() < 1e-6 && (fit.q[3] - 1.0).abs() < 1e-6, "{:?}", fit.q);
    }

    #[test]
    fn closed_form_on_toy_and_sign() {
        let cf = closed_form_q1_q2(&toy_table(), &[0.0, 1.0], 0).unwrap();
        assert_eq!(cf.q1, 0.0);
        assert!((cf.q2 - 1.0).abs() < 1e-15);
        let conv = resolve_sign(&cf, 0.0, -1.0);
        assert_eq!(conv.sign, -1.0);
        assert!((cf.signed(conv.sign).1 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_diagonal() {
        let t = MatrixElementTable {
            entries: vec![vec![vec![0.5, 0.0], vec![0.0, 2.0]], vec![vec![-0.25, 0.0], vec![0.0, 1.0]]],
        };
        let cf = closed_form_q1_q2(&t, &[1.0, 3.0], 0).unwrap();
        assert_eq!((cf.q1, cf.q2), (-0.5, 0.25));
    }

    #[test]
    fn prediction_arithmetic() {
        let e = PerturbationExpansion {
            base_index: 0,
            mu_j: 1.0,
            exponent_step: 0.5,
            q: vec![0.0; 3],
        };
        let p = evaluate_prediction(&e, 1.0, 0.5, 0.1, 0).unwrap();
        assert!((p.lambda - (100.0 * PI * PI + 10.0)).abs() < 1e-10);
        let e1 = PerturbationExpansion {
            q: vec![0.3, -0.2, 0.1],
            ..e
        };
        let p = evaluate_prediction(&e1, 2.0, 0.5, 1.0, 3).unwrap();
        assert!((p.lambda - (PI * PI / 4.0 + 1.0 + 0.2)).abs() < 1e-14);
        assert!(evaluate_prediction(&e1, 1.0, 0.5, 0.1, 4).is_err());
    }

    #[test]
    fn regrading_spreads_coefficients() {
        let e = PerturbationExpansion {
            base_index: 0,
            mu_j: 1.0,
            exponent_step: 1.0,
            q: vec![2.0, 3.0],
        };
        let r = e.regrade(2);
        assert_eq!(r.q, vec![0.0, 2.0, 0.0, 3.0]);
        assert_eq!(r.exponent_step, 0.5);
        assert!((r.nu(0.3, 4) - e.nu(0.3, 2)).abs() < 1e-15);
    }
}
