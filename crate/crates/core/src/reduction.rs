//! Projection onto the adiabatic subspace `chi(x) sqrt(2/(eps h)) sin(pi y/(eps h))`,
//! the four blocks of the Dirichlet form, and the scalar equation for the
//! gap `lambda_tilde` between a direct eigenvalue and its model value.
//!
//! All inner products are `B`-inner products. Blocks are available in
//! form sense (`Pi_a^T K Pi_b v`, a covector) and operator sense
//! (`B^-1` of the former).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian2d::{assemble_mapped_form, solve_lowest_modes, EigenSettings, MappedForms, Mesh2D};
use crate::oscillator::{solve_on_grid, Grid1D};
use crate::profile::DomainProfile;
use crate::sparse::{axpy, dot, BandCholesky, CsrMatrix};
use crate::tridiag::{lowest_eigenpairs, solve_tridiagonal, SymTridiagonal};

/// Nodal samples of `sqrt(2/(eps h(x_i))) sin(pi t)` on each mesh column,
/// times the hat function of that column.
#[derive(Debug, Clone)]
pub struct AdiabaticBasis {
    pub mesh: Mesh2D,
    pub epsilon: f64,
    /// `sqrt(2/(eps h(x_i)))` for interior columns.
    pub weights: Vec<f64>,
    /// `sin(pi t_l)` for interior rows.
    pub transverse: Vec<f64>,
    /// `G = Phi^T B Phi`.
    pub gram: SymTridiagonal,
}

impl AdiabaticBasis {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `Phi c`.
    pub fn embed(&self, c: &[f64]) -> Vec<f64> {
        let nt = self.mesh.nt;
        let mut v = vec![0.0; self.mesh.dim()];
        for (i, ci) in c.iter().enumerate() {
            let w = ci * self.weights[i];
            for (l, s) in self.transverse.iter().enumerate() {
                v[i * nt + l] = w * s;
            }
        }
        v
    }

    /// `Phi^T y` for a covector `y`.
    pub fn restrict(&self, y: &[f64]) -> Vec<f64> {
        let nt = self.mesh.nt;
        (0..self.dim())
            .map(|i| self.weights[i] * dot(&y[i * nt..(i + 1) * nt], &self.transverse))
            .collect()
    }

    /// `G^-1 z`.
    pub fn gram_solve(&self, z: &[f64]) -> Vec<f64> {
        let g = &self.gram;
        solve_tridiagonal(&g.off, &g.diag, &g.off, z)
    }

    /// Dense `B`-orthonormal basis of the subspace, for small meshes.
    pub fn orthonormal_vectors(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let g = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.gram.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.gram.off[i.min(j)]
            } else {
                0.0
            }
        });
        let l = g
            .cholesky()
            .ok_or_else(|| Error::Mesh("adiabatic basis is rank deficient".into()))?
            .l();
        let linv = l.try_inverse().ok_or_else(|| Error::Mesh("adiabatic basis is rank deficient".into()))?;
        // columns of Phi L^-T
        Ok((0..n)
            .map(|k| {
                let c: Vec<f64> = (0..n).map(|i| linv[(k, i)]).collect();
                self.embed(&c)
            })
            .collect())
    }
}

/// Builds the basis and its Gram matrix against the mass matrix `b`.
pub fn build_projection(profile: &DomainProfile, eps: f64, mesh: &Mesh2D, b: &CsrMatrix) -> Result<AdiabaticBasis> {
    let weights: Vec<f64> = (1..=mesh.nx)
        .map(|i| {
            let h = profile.h(mesh.x(i));
            if h > 0.0 {
                Ok((2.0 / (eps * h)).sqrt())
            } else {
                Err(Error::NonPositiveHeight { x: mesh.x(i), h })
            }
        })
        .collect::<Result<_>>()?;
    let transverse = (1..=mesh.nt).map(|l| (std::f64::consts::PI * mesh.t(l)).sin()).collect();
    let mut basis = AdiabaticBasis {
        mesh: *mesh,
        epsilon: eps,
        weights,
        transverse,
        gram: SymTridiagonal::identity(mesh.nx),
    };
    basis.gram = column_pencil(&basis, b)?;
    if basis.gram.diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Mesh("adiabatic basis is rank deficient".into()));
    }
    Ok(basis)
}

/// `Phi^T A Phi`, tridiagonal because `A` couples neighbouring columns only.
fn column_pencil(basis: &AdiabaticBasis, a: &CsrMatrix) -> Result<SymTridiagonal> {
    let nx = basis.dim();
    let nt = basis.mesh.nt;
    let entries: Vec<(f64, f64)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut d = 0.0;
            let mut o = 0.0;
            for l in 0..nt {
                let row = i * nt + l;
                let vi = basis.weights[i] * basis.transverse[l];
                for (col, val) in a.row(row) {
                    let (ci, cl) = (col / nt, col % nt);
                    let vc = basis.weights[ci] * basis.transverse[cl];
                    if ci == i {
                        d += vi * val * vc;
                    } else if ci == i + 1 {
                        o += vi * val * vc;
                    }
                }
            }
            (d, o)
        })
        .collect();
    let diag = entries.iter().map(|e| e.0).collect();
    let off = entries[..nx - 1].iter().map(|e| e.1).collect();
    SymTridiagonal::new(diag, off)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    A11,
    A12,
    A21,
    A22,
}

/// The Dirichlet form split by `P` and `Q = I - P`.
#[derive(Debug, Clone)]
pub struct BlockOperators {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub basis: AdiabaticBasis,
    /// `Phi^T K Phi`; with the Gram matrix it is the `A11` pencil.
    pub a11_pencil: SymTridiagonal,
    mass_factor: BandCholesky,
    /// Factor of `K - sigma B`, preconditioner of complement solves.
    shifted_factor: BandCholesky,
    pub shift: f64,
    pub pcg_tol: f64,
}

pub fn build_blocks(forms: &MappedForms, basis: AdiabaticBasis, max_height: f64) -> Result<BlockOperators> {
    let a11_pencil = column_pencil(&basis, &forms.stiffness)?;
    let mass_factor = BandCholesky::factor(&forms.mass)?;
    let floor = std::f64::consts::PI.powi(2) / (max_height * forms.epsilon).powi(2);
    let mut shift = floor;
    let shifted_factor = loop {
        match BandCholesky::factor(&forms.stiffness.add_scaled(-shift, &forms.mass)) {
            Ok(f) => break f,
            Err(e) if shift < 1e-3 * floor => return Err(e),
            Err(_) => shift *= 0.9,
        }
    };
    Ok(BlockOperators {
        stiffness: forms.stiffness.clone(),
        mass: forms.mass.clone(),
        basis,
        a11_pencil,
        mass_factor,
        shifted_factor,
        shift,
        pcg_tol: 1e-10,
    })
}

impl BlockOperators {
    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// Coordinates `G^-1 Phi^T B v` of `P v`.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        self.basis.gram_solve(&self.basis.restrict(&self.mass.matvec(v)))
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.basis.embed(&self.coords(v))
    }

    pub fn complement(&self, v: &[f64]) -> Vec<f64> {
        let p = self.project(v);
        v.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// `P^T y = B Phi G^-1 Phi^T y`.
    fn project_dual(&self, y: &[f64]) -> Vec<f64> {
        self.mass.matvec(&self.basis.embed(&self.basis.gram_solve(&self.basis.restrict(y))))
    }

    fn complement_dual(&self, y: &[f64]) -> Vec<f64> {
        let p = self.project_dual(y);
        y.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.form(u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `Pi_a^T K Pi_b v`; the four blocks sum to `K v`.
    pub fn apply_form(&self, block: Block, v: &[f64]) -> Vec<f64> {
        let right = match block {
            Block::A11 | Block::A21 => self.project(v),
            Block::A12 | Block::A22 => self.complement(v),
        };
        let kv = self.stiffness.matvec(&right);
        match block {
            Block::A11 | Block::A12 => self.project_dual(&kv),
            Block::A21 | Block::A22 => self.complement_dual(&kv),
        }
    }

    /// `Pi_a B^-1 K Pi_b v`.
    pub fn apply(&self, block: Block, v: &[f64]) -> Vec<f64> {
        self.mass_factor.solve(&self.apply_form(block, v))
    }

    /// Lowest `count` Ritz pairs of `A11`; vectors are `B`-normalized.
    pub fn a11_ritz(&self, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let eig = lowest_eigenpairs(&self.a11_pencil, &self.basis.gram, count)?;
        let vectors = eig.vectors.iter().map(|c| self.basis.embed(c)).collect();
        Ok((eig.values, vectors))
    }

    /// Solves `(A22 - lambda) z = w` for `w` in the range of `Q` by
    /// conjugate gradients on the complement, preconditioned with
    /// `Q (K - sigma B)^-1 Q^T`. Returns `z` and the iteration count.
    pub fn resolvent_solve(&self, lambda: f64, w: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = self.dim();
        let precond = |r: &[f64]| self.complement(&self.shifted_factor.solve(r));
        let op = |p: &[f64]| {
            let mut y = self.stiffness.matvec(p);
            axpy(-lambda, &self.mass.matvec(p), &mut y);
            self.complement_dual(&y)
        };
        let mut r = self.mass.matvec(&self.complement(w));
        let r0 = dot(&r, &r).sqrt();
        let mut x = vec![0.0; n];
        if r0 == 0.0 {
            return Ok((x, 0));
        }
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 500;
        let mut res = 1.0;
        for it in 1..=max_iter {
            let ap = op(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::NotPositiveDefinite { row: it, pivot: pap });
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            res = dot(&r, &r).sqrt() / r0;
            if res < self.pcg_tol {
                return Ok((self.complement(&x), it));
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(Error::NoConvergence {
            solver: "complement conjugate gradients",
            iterations: max_iter,
            residual: res,
        })
    }
}

/// Ritz values of `A11` against the 1D operator
/// `-d^2/dx^2 + pi^2/(eps h)^2 + (pi^2/3 + 1/4) h'^2/h^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A11Report {
    pub ritz: Vec<f64>,
    pub reference: Vec<f64>,
    pub relative_difference: Vec<f64>,
    pub floor: f64,
    /// Every Ritz value is at least `floor (1 - slack)`.
    pub above_floor: bool,
    pub slack: f64,
}

pub fn verify_a11_formula(blocks: &BlockOperators, profile: &DomainProfile, eps: f64, count: usize) -> Result<A11Report> {
    let (ritz, _) = blocks.a11_ritz(count)?;
    let mesh = blocks.basis.mesh;
    let grid = Grid1D::new(mesh.left, mesh.right, mesh.nx + 2)?;
    let reference = solve_on_grid(|x| profile.a11_potential(eps, x), grid, count)?.eigenvalues;
    let relative_difference = ritz.iter().zip(&reference).map(|(a, b)| (a - b).abs() / b.abs()).collect();
    let floor = profile.spectral_floor(eps);
    let slack = 10.0 / (mesh.nt * mesh.nt) as f64;
    Ok(A11Report {
        above_floor: ritz.iter().all(|r| *r >= floor * (1.0 - slack)),
        ritz,
        reference,
        relative_difference,
        floor,
        slack,
    })
}

/// Bottom of `A22` from a Lanczos run on `(A22 - sigma)^-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub min_ritz: f64,
    /// `4 pi^2 / (M eps)^2`.
    pub bound: f64,
    /// `min_ritz / bound - 0.9`.
    pub margin: f64,
    pub passed: bool,
    pub lanczos_steps: usize,
}

pub fn a22_gap_check(blocks: &BlockOperators, eps: f64, max_height: f64, steps: usize, seed: u64) -> Result<GapReport> {
    let n = blocks.dim();
    let sigma = blocks.shift;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut q = blocks.complement(&start);
    let nq = blocks.norm(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for k in 0..steps {
        let (mut w, _) = blocks.resolvent_solve(sigma, &basis[k])?;
        let a = blocks.inner(&w, &basis[k]);
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for v in &basis {
                let c = blocks.inner(&w, v);
                axpy(-c, v, &mut w);
            }
        }
        let b = blocks.norm(&w);
        if k + 1 == steps || b < 1e-14 * a.abs() {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|v| *v /= b);
        basis.push(w);
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i.abs_diff(j) == 1 {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let top = SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min_ritz = sigma + 1.0 / top;
    let bound = 4.0 * std::f64::consts::PI.powi(2) / (max_height * eps).powi(2);
    Ok(GapReport {
        min_ritz,
        bound,
        margin: min_ritz / bound - 0.9,
        passed: min_ritz >= 0.9 * bound,
        lanczos_steps: m,
    })
}

/// Coefficients of `g(x) = sum a_n x^n`, whose fixed point is `lambda_tilde`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionSeries {
    /// Model eigenvalue of `A11`.
    pub lambda: f64,
    #[serde(skip)]
    pub phi: Vec<f64>,
    #[serde(skip)]
    pub u1: Vec<f64>,
    pub corr_a: Vec<f64>,
    /// `|a_{N-1} / a_N|`, an estimate of the convergence radius of `g`.
    pub radius_estimate: f64,
    pub overlap: f64,
    /// `|<u1, phi>| / (|u1| |phi|)`.
    pub overlap_ratio: f64,
    /// `|A21 u1| |A21 phi| / |<u1, phi>|`.
    pub prefactor: f64,
    pub a21_u1: f64,
    pub a21_phi: f64,
}

impl CorrectionSeries {
    pub fn eval(&self, x: f64) -> f64 {
        self.corr_a.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.corr_a
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (n, a)| acc * x + n as f64 * a)
    }

    /// `|a_{n+1}| / |a_n|`.
    pub fn decay_ratios(&self) -> Vec<f64> {
        self.corr_a.windows(2).map(|w| (w[1] / w[0]).abs()).collect()
    }
}

/// Smallest `|<u1, phi>| / (|u1| |phi|)` accepted by [`correction_coefficients`].
pub const MIN_OVERLAP_RATIO: f64 = 1e-2;

/// `a_n = -<u1, A12 (A22 - lambda)^-(n+1) A21 phi> / <u1, phi>` for `n <= order`.
pub fn correction_coefficients(
    blocks: &BlockOperators,
    lambda: f64,
    phi: &[f64],
    u1: &[f64],
    order: usize,
) -> Result<CorrectionSeries> {
    let u1 = blocks.project(u1);
    let phi = blocks.project(phi);
    let overlap = blocks.inner(&u1, &phi);
    let (nu, np) = (blocks.norm(&u1), blocks.norm(&phi));
    let overlap_ratio = overlap.abs() / (nu * np);
    if !(overlap_ratio >= MIN_OVERLAP_RATIO) {
        return Err(Error::SmallOverlap {
            overlap: overlap_ratio,
            threshold: MIN_OVERLAP_RATIO,
        });
    }
    let a21_phi_vec = blocks.apply(Block::A21, &phi);
    let a21_u1 = blocks.norm(&blocks.apply(Block::A21, &u1));
    let a21_phi = blocks.norm(&a21_phi_vec);
    let ku1 = blocks.stiffness.matvec(&u1);
    let mut w = a21_phi_vec;
    let mut corr_a = Vec::with_capacity(order + 1);
    for _ in 0..=order {
        w = blocks.resolvent_solve(lambda, &w)?.0;
        corr_a.push(-dot(&ku1, &w) / overlap);
    }
    let radius_estimate = if order >= 1 && corr_a[order] != 0.0 {
        (corr_a[order - 1] / corr_a[order]).abs()
    } else {
        f64::INFINITY
    };
    Ok(CorrectionSeries {
        lambda,
        phi,
        u1,
        corr_a,
        radius_estimate,
        overlap,
        overlap_ratio,
        prefactor: a21_u1 * a21_phi / overlap.abs(),
        a21_u1,
        a21_phi,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointTrace {
    pub iterates: Vec<f64>,
    pub converged: bool,
    /// `sup |g'|` over `|x| <= 2 |a0|`, from the coefficients.
    pub lipschitz_estimate: f64,
    /// Largest observed `|d_{k+1}| / |d_k|`; zero when fewer than two steps moved.
    pub empirical_ratio: f64,
}

impl FixedPointTrace {
    pub fn value(&self) -> f64 {
        *self.iterates.last().unwrap()
    }
}

/// `x_0 = a0`, `x_{k+1} = g(x_k)` until `|x_{k+1} - x_k| < tol`.
pub fn fixed_point_iterate(series: &CorrectionSeries, tol: f64, max_iter: usize) -> Result<FixedPointTrace> {
    let a0 = series.corr_a.first().copied().unwrap_or(0.0);
    let radius = 2.0 * a0.abs();
    let lipschitz_estimate = series
        .corr_a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, a)| n as f64 * a.abs() * radius.powi(n as i32 - 1))
        .sum();
    let mut iterates = vec![a0];
    let mut diffs: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let x = *iterates.last().unwrap();
        let next = series.eval(x);
        let d = (next - x).abs();
        iterates.push(next);
        if let Some(prev) = diffs.last() {
            if *prev > 0.0 {
                ratios.push(d / prev);
            }
        }
        diffs.push(d);
        if d < tol {
            converged = true;
            break;
        }
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|r| *r >= 1.0) {
            return Err(Error::NonContraction { ratios });
        }
    }
    // ratios below the stopping tolerance carry round-off only
    let empirical_ratio = diffs
        .windows(2)
        .filter(|w| w[0] >= tol)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    Ok(FixedPointTrace {
        iterates,
        converged,
        lipschitz_estimate,
        empirical_ratio,
    })
}

/// Settings of the per-`epsilon` reduction pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionSettings {
    pub nt: usize,
    /// `None` uses [`Mesh2D::default_nx`].
    pub nx: Option<usize>,
    pub eigen: EigenSettings,
    /// Truncation order of `g`.
    pub order: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub lanczos_steps: usize,
    pub pcg_tol: f64,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self {
            nt: 32,
            nx: None,
            eigen: EigenSettings::default(),
            order: 6,
            fixed_point_tol: 1e-12,
            fixed_point_max_iter: 100,
            lanczos_steps: 30,
            pcg_tol: 1e-10,
        }
    }
}

impl ReductionSettings {
    pub fn mesh(&self, profile: &DomainProfile, eps: f64) -> Result<Mesh2D> {
        let nx = self.nx.unwrap_or_else(|| Mesh2D::default_nx(profile, eps));
        Mesh2D::new(profile, nx, self.nt)
    }
}

/// Everything the reduction says about level `j` at one `epsilon` and mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionAnalysis {
    pub epsilon: f64,
    pub level: usize,
    pub mesh: Mesh2D,
    pub lambda_direct: f64,
    pub lambda_model: f64,
    /// `lambda_direct - lambda_model`.
    pub gap_direct: f64,
    pub oracle: CorrectionSeries,
    pub approximate: CorrectionSeries,
    pub oracle_trace: FixedPointTrace,
    pub approximate_trace: FixedPointTrace,
    pub gap: GapReport,
    /// `|A22 - lambda|^-1 / eps^2`.
    pub resolvent_constant: f64,
    /// `|<P u_j, phi_j>|` dominates `|<P u_j, phi_k>|`, `k != j`.
    pub pairing_ok: bool,
}

/// Level-independent parts of one reduction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedAnalysis {
    pub epsilon: f64,
    pub mesh: Mesh2D,
    pub direct: Vec<f64>,
    pub ritz: Vec<f64>,
    pub gap: GapReport,
}

/// Direct solve, blocks and gap check once, then both correction series and
/// both fixed-point iterations for each level `0..levels`. Level failures are
/// kept per level.
pub fn analyse_levels(
    profile: &DomainProfile,
    eps: f64,
    levels: usize,
    mesh: &Mesh2D,
    settings: &ReductionSettings,
) -> Result<(SharedAnalysis, Vec<Result<ReductionAnalysis>>)> {
    let forms = assemble_mapped_form(profile, eps, mesh)?;
    let count = settings.eigen.count.max(levels);
    let direct = solve_lowest_modes(&forms, profile.max_height, &EigenSettings { count, ..settings.eigen })?;
    let basis = build_projection(profile, eps, mesh, &forms.mass)?;
    let mut blocks = build_blocks(&forms, basis, profile.max_height)?;
    blocks.pcg_tol = settings.pcg_tol;
    let (ritz, phis) = blocks.a11_ritz((levels + 1).min(mesh.nx))?;
    let gap = a22_gap_check(&blocks, eps, profile.max_height, settings.lanczos_steps, settings.eigen.seed)?;
    let per_level = (0..levels)
        .into_par_iter()
        .map(|j| {
            let lambda = ritz[j];
            let phi = &phis[j];
            let u1 = blocks.project(&direct.eigenvectors[j]);
            let overlaps: Vec<f64> = phis.iter().map(|p| blocks.inner(&u1, p).abs()).collect();
            let pairing_ok = overlaps.iter().enumerate().all(|(k, o)| k == j || *o < overlaps[j]);
            let oracle = correction_coefficients(&blocks, lambda, phi, &u1, settings.order)?;
            let approximate = correction_coefficients(&blocks, lambda, phi, phi, settings.order)?;
            let oracle_trace = fixed_point_iterate(&oracle, settings.fixed_point_tol, settings.fixed_point_max_iter)?;
            let approximate_trace =
                fixed_point_iterate(&approximate, settings.fixed_point_tol, settings.fixed_point_max_iter)?;
            Ok(ReductionAnalysis {
                epsilon: eps,
                level: j,
                mesh: *mesh,
                lambda_direct: direct.eigenvalues[j],
                lambda_model: lambda,
                gap_direct: direct.eigenvalues[j] - lambda,
                oracle,
                approximate,
                oracle_trace,
                approximate_trace,
                resolvent_constant: 1.0 / ((gap.min_ritz - lambda) * eps * eps),
                gap: gap.clone(),
                pairing_ok,
            })
        })
        .collect();
    let shared = SharedAnalysis {
        epsilon: eps,
        mesh: *mesh,
        direct: direct.eigenvalues.clone(),
        ritz: ritz[..levels].to_vec(),
        gap,
    };
    Ok((shared, per_level))
}

/// Single-level form of [`analyse_levels`].
pub fn analyse_level(
    profile: &DomainProfile,
    eps: f64,
    j: usize,
    mesh: &Mesh2D,
    settings: &ReductionSettings,
) -> Result<ReductionAnalysis> {
    let (_, mut levels) = analyse_levels(profile, eps, j + 1, mesh, settings)?;
    levels.pop().unwrap()
}

/// A level on a mesh and its refinement, with extrapolated values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedAnalysis {
    pub coarse: ReductionAnalysis,
    pub fine: ReductionAnalysis,
    pub lambda_direct: f64,
    pub lambda_model: f64,
    pub lambda_tilde_oracle: f64,
    pub lambda_tilde_approx: f64,
    /// Extrapolation error estimate of the direct value.
    pub direct_error: f64,
    /// Sum of the extrapolation error estimates of the direct and model values.
    pub discretization_error: f64,
}

fn combine(coarse: ReductionAnalysis, fine: ReductionAnalysis) -> RefinedAnalysis {
    let extrapolate = |c: f64, f: f64| (4.0 * f - c) / 3.0;
    let err = |c: f64, f: f64| (f - c).abs() / 3.0;
    RefinedAnalysis {
        lambda_direct: extrapolate(coarse.lambda_direct, fine.lambda_direct),
        lambda_model: extrapolate(coarse.lambda_model, fine.lambda_model),
        lambda_tilde_oracle: extrapolate(coarse.oracle_trace.value(), fine.oracle_trace.value()),
        lambda_tilde_approx: extrapolate(coarse.approximate_trace.value(), fine.approximate_trace.value()),
        direct_error: err(coarse.lambda_direct, fine.lambda_direct),
        discretization_error: err(coarse.lambda_direct, fine.lambda_direct)
            + err(coarse.lambda_model, fine.lambda_model),
        coarse,
        fine,
    }
}

/// [`analyse_levels`] on `mesh` and `mesh.refined()`.
pub fn analyse_refined_levels(
    profile: &DomainProfile,
    eps: f64,
    levels: usize,
    mesh: &Mesh2D,
    settings: &ReductionSettings,
) -> Result<Vec<Result<RefinedAnalysis>>> {
    let (coarse, fine) = rayon::join(
        || analyse_levels(profile, eps, levels, mesh, settings),
        || analyse_levels(profile, eps, levels, &mesh.refined(), settings),
    );
    let (coarse, fine) = (coarse?.1, fine?.1);
    Ok(coarse
        .into_iter()
        .zip(fine)
        .map(|(c, f)| Ok(combine(c?, f?)))
        .collect())
}

pub fn analyse_refined(
    profile: &DomainProfile,
    eps: f64,
    j: usize,
    mesh: &Mesh2D,
    settings: &ReductionSettings,
) -> Result<RefinedAnalysis> {
    analyse_refined_levels(profile, eps, j + 1, mesh, settings)?.pop().unwrap()
}

/// Log-log slope of `|A21 u1| |A21 phi| / |<u1, phi>|` against `epsilon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingProbe {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` when the quantity vanishes (flat profile).
    pub slope: Option<f64>,
    pub residual: f64,
    pub degenerate: bool,
}

/// Least-squares line through `(ln x, ln y)`: slope and rms residual.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}

pub fn a21_scaling_probe(
    profile: &DomainProfile,
    epsilons: &[f64],
    settings: &ReductionSettings,
) -> Result<ScalingProbe> {
    if epsilons.len() < 4 {
        return Err(Error::Parameter("the scaling probe needs at least 4 epsilon values".into()));
    }
    let values: Vec<f64> = epsilons
        .par_iter()
        .map(|&eps| {
            let mesh = settings.mesh(profile, eps)?;
            Ok(analyse_level(profile, eps, 0, &mesh, settings)?.oracle.prefactor)
        })
        .collect::<Result<_>>()?;
    let scale = values.iter().cloned().fold(0.0, f64::max);
    let degenerate = profile.is_rectangle() || values.iter().any(|v| !(*v > 1e-9 * scale.max(1e-300)));
    if degenerate {
        return Ok(ScalingProbe {
            epsilons: epsilons.to_vec(),
            values,
            slope: None,
            residual: 0.0,
            degenerate,
        });
    }
    let (slope, residual) = loglog_fit(epsilons, &values);
    Ok(ScalingProbe {
        epsilons: epsilons.to_vec(),
        values,
        slope: Some(slope),
        residual,
        degenerate,
    })
}
