//! Dirichlet Laplacian on `{ -l1 < x < l2, 0 < y < eps h(x) }` in the
//! straightened coordinates `t = y / (eps h(x))`, with bilinear elements.
//!
//! The energy and mass become
//! `int int [(v_x - t (h'/h) v_t)^2 + (v_t / (eps h))^2] eps h dx dt` and
//! `int int v^2 eps h dx dt` over `(-l1, l2) x (0, 1)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::richardson_pair;
use crate::profile::DomainProfile;
use crate::sparse::{dot, BandCholesky, CsrMatrix};

/// Tensor mesh of the straightened strip; boundary nodes carry no unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh2D {
    /// Interior node counts.
    pub nx: usize,
    pub nt: usize,
    pub left: f64,
    pub right: f64,
}

impl Mesh2D {
    pub fn new(profile: &DomainProfile, nx: usize, nt: usize) -> Result<Self> {
        if nx < 2 || nt < 2 {
            return Err(Error::Mesh(format!("need at least 2 interior nodes per direction, got {nx} x {nt}")));
        }
        Ok(Self {
            nx,
            nt,
            left: -profile.l1,
            right: profile.l2,
        })
    }

    /// `nx = max(64, 8 (l1 + l2) / eps^alpha1)`.
    pub fn default_nx(profile: &DomainProfile, eps: f64) -> usize {
        let scale = eps.powf(profile.alpha1());
        64usize.max((8.0 * profile.length() / scale).ceil() as usize)
    }

    pub fn for_epsilon(profile: &DomainProfile, eps: f64, nt: usize) -> Result<Self> {
        Self::new(profile, Self::default_nx(profile, eps), nt)
    }

    pub fn hx(&self) -> f64 {
        (self.right - self.left) / (self.nx + 1) as f64
    }

    pub fn ht(&self) -> f64 {
        1.0 / (self.nt + 1) as f64
    }

    /// Coordinate of full-grid node `i` in `0..=nx+1`.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx + 1 {
            self.right
        } else {
            self.left + i as f64 * self.hx()
        }
    }

    pub fn t(&self, l: usize) -> f64 {
        l as f64 * self.ht()
    }

    pub fn dim(&self) -> usize {
        self.nx * self.nt
    }

    /// Unknown index of interior node `(i, l)`, both 1-based on the full grid.
    pub fn index(&self, i: usize, l: usize) -> usize {
        (i - 1) * self.nt + (l - 1)
    }

    /// Same domain with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx + 1,
            nt: 2 * self.nt + 1,
            ..*self
        }
    }
}

/// Stiffness `K` and mass `B` of the mapped form.
#[derive(Debug, Clone)]
pub struct MappedForms {
    pub mesh: Mesh2D,
    pub epsilon: f64,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

fn shape(a: usize, s: f64) -> f64 {
    if a == 0 {
        1.0 - s
    } else {
        s
    }
}

fn dshape(a: usize) -> f64 {
    if a == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Assembles `K` and `B` with bilinear elements and 2x2 Gauss quadrature.
pub fn assemble_mapped_form(profile: &DomainProfile, eps: f64, mesh: &Mesh2D) -> Result<MappedForms> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
    }
    let (hx, ht) = (mesh.hx(), mesh.ht());
    let columns: Vec<Result<(Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)>> = (0..=mesh.nx)
        .into_par_iter()
        .map(|ix| {
            let mut kt = Vec::new();
            let mut bt = Vec::new();
            // x-quadrature data shared by the column of elements
            let mut xq = [(0.0, 0.0, 0.0); 2];
            for (q, g) in GAUSS.iter().enumerate() {
                let x = mesh.x(ix) + g * hx;
                let (h, dh, _) = profile.h_derivs(x);
                if !(h > 0.0) {
                    return Err(Error::NonPositiveHeight { x, h });
                }
                xq[q] = (*g, h, dh / h);
            }
            for it in 0..=mesh.nt {
                let mut ke = [[0.0; 4]; 4];
                let mut be = [[0.0; 4]; 4];
                for &(gx, h, r) in &xq {
                    let eh = eps * h;
                    for &gt in &GAUSS {
                        let t = mesh.t(it) + gt * ht;
                        let w = 0.25 * hx * ht;
                        let mut n = [0.0; 4];
                        let mut dx = [0.0; 4];
                        let mut dt = [0.0; 4];
                        for a in 0..4 {
                            let (ai, at) = (a & 1, a >> 1);
                            n[a] = shape(ai, gx) * shape(at, gt);
                            dx[a] = dshape(ai) * shape(at, gt) / hx;
                            dt[a] = shape(ai, gx) * dshape(at) / ht;
                        }
                        for a in 0..4 {
                            let ga = dx[a] - t * r * dt[a];
                            for b in 0..4 {
                                let gb = dx[b] - t * r * dt[b];
                                ke[a][b] += w * (eh * ga * gb + dt[a] * dt[b] / eh);
                                be[a][b] += w * eh * n[a] * n[b];
                            }
                        }
                    }
                }
                let node = |a: usize| -> Option<usize> {
                    let (i, l) = (ix + (a & 1), it + (a >> 1));
                    if i >= 1 && i <= mesh.nx && l >= 1 && l <= mesh.nt {
                        Some(mesh.index(i, l))
                    } else {
                        None
                    }
                };
                for a in 0..4 {
                    let Some(ra) = node(a) else { continue };
                    for b in 0..4 {
                        let Some(rb) = node(b) else { continue };
                        kt.push((ra, rb, ke[a][b]));
                        bt.push((ra, rb, be[a][b]));
                    }
                }
            }
            Ok((kt, bt))
        })
        .collect();
    let mut kt = Vec::new();
    let mut bt = Vec::new();
    for c in columns {
        let (k, b) = c?;
        kt.extend(k);
        bt.extend(b);
    }
    let n = mesh.dim();
    Ok(MappedForms {
        mesh: *mesh,
        epsilon: eps,
        stiffness: CsrMatrix::from_triplets(n, kt),
        mass: CsrMatrix::from_triplets(n, bt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSettings {
    /// Number of eigenpairs.
    pub count: usize,
    /// Relative residual `|K u - L B u| / (L |B u|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the start block perturbation.
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            count: 5,
            tol: 1e-10,
            max_iter: 500,
            seed: 0x5eed,
        }
    }
}

/// Lowest eigenpairs of `K u = Lambda B u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult2D {
    pub epsilon: f64,
    pub eigenvalues: Vec<f64>,
    /// `B`-orthonormal eigenvectors on the interior nodes.
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub shift: f64,
}

/// Dense generalized eigenproblem `A y = theta G y` for small symmetric
/// `A` and positive definite `G`; ascending, `G`-orthonormal.
pub fn small_generalized_eigen(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = g.clone().cholesky().ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lt_inv = linv.transpose();
    let vecs = DMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        (0..a.nrows()).map(|k| lt_inv[(r, k)] * eig.eigenvectors[(k, order[c])]).sum()
    });
    Ok((vals, vecs))
}

/// Shift-invert block subspace iteration with Rayleigh–Ritz, shift
/// `pi^2/(M eps)^2` (the strip floor; `K - sigma B` stays positive definite
/// for a conforming discretization), falling back to smaller shifts if the
/// band factorization fails.
pub fn solve_lowest_modes(forms: &MappedForms, max_height: f64, settings: &EigenSettings) -> Result<SpectralResult2D> {
    let floor = std::f64::consts::PI.powi(2) / (max_height * forms.epsilon).powi(2);
    let mut shift = floor;
    let mut factor = None;
    for _ in 0..6 {
        match BandCholesky::factor(&forms.stiffness.add_scaled(-shift, &forms.mass)) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(_) => shift *= 0.9,
        }
    }
    let factor = factor.ok_or(Error::NotPositiveDefinite { row: 0, pivot: shift })?;
    subspace_iteration(&forms.stiffness, &forms.mass, &factor, shift, forms.epsilon, settings)
}

fn subspace_iteration(
    k: &CsrMatrix,
    b: &CsrMatrix,
    factor: &BandCholesky,
    shift: f64,
    epsilon: f64,
    settings: &EigenSettings,
) -> Result<SpectralResult2D> {
    let n = k.dim();
    let want = settings.count;
    if want == 0 || want > n {
        return Err(Error::Parameter(format!("cannot compute {want} modes of a {n}-dimensional problem")));
    }
    let p = (want + want.max(3)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            (0..n)
                .map(|i| {
                    let s = (i as f64 + 1.0) / (n as f64 + 1.0);
                    ((c + 1) as f64 * std::f64::consts::PI * s).sin() + 0.1 * rng.gen_range(-1.0..1.0)
                })
                .collect()
        })
        .collect();
    let mut last_res = f64::INFINITY;
    for iter in 1..=settings.max_iter {
        let y: Vec<Vec<f64>> = x.par_iter().map(|v| factor.solve(&b.matvec(v))).collect();
        let ky: Vec<Vec<f64>> = y.par_iter().map(|v| k.matvec(v)).collect();
        let by: Vec<Vec<f64>> = y.par_iter().map(|v| b.matvec(v)).collect();
        let kq = DMatrix::from_fn(p, p, |i, j| dot(&y[i], &ky[j]));
        let bq = DMatrix::from_fn(p, p, |i, j| dot(&y[i], &by[j]));
        let kq = (&kq + kq.transpose()) * 0.5;
        let bq = (&bq + bq.transpose()) * 0.5;
        let (theta, c) = small_generalized_eigen(&kq, &bq)?;
        let combine = |src: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (r, v) in src.iter().enumerate() {
                let w = c[(r, col)];
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += w * vi;
                }
            }
            out
        };
        x = (0..p).map(|col| combine(&y, col)).collect();
        let kx: Vec<Vec<f64>> = (0..want).map(|col| combine(&ky, col)).collect();
        let bx: Vec<Vec<f64>> = (0..want).map(|col| combine(&by, col)).collect();
        let residuals: Vec<f64> = (0..want)
            .map(|j| {
                let r: f64 = kx[j].iter().zip(&bx[j]).map(|(a, bb)| (a - theta[j] * bb).powi(2)).sum::<f64>().sqrt();
                r / (theta[j].abs() * dot(&bx[j], &bx[j]).sqrt())
            })
            .collect();
        last_res = residuals.iter().cloned().fold(0.0, f64::max);
        if last_res < settings.tol {
            let eigenvectors = x
                .into_iter()
                .take(want)
                .map(|mut v| {
                    let imax = (0..n).max_by(|&i, &j| v[i].abs().partial_cmp(&v[j].abs()).unwrap()).unwrap();
                    if v[imax] < 0.0 {
                        v.iter_mut().for_each(|e| *e = -*e);
                    }
                    v
                })
                .collect();
            return Ok(SpectralResult2D {
                epsilon,
                eigenvalues: theta[..want].to_vec(),
                eigenvectors,
                residuals,
                iterations: iter,
                shift,
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "shift-invert subspace iteration",
        iterations: settings.max_iter,
        residual: last_res,
    })
}

/// Assembles and solves on one mesh.
pub fn solve_direct(
    profile: &DomainProfile,
    eps: f64,
    mesh: &Mesh2D,
    settings: &EigenSettings,
) -> Result<(MappedForms, SpectralResult2D)> {
    let forms = assemble_mapped_form(profile, eps, mesh)?;
    let res = solve_lowest_modes(&forms, profile.max_height, settings)?;
    Ok((forms, res))
}

/// Direct eigenvalues extrapolated over one mesh doubling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectEstimate {
    pub epsilon: f64,
    pub mesh: Mesh2D,
    pub eigenvalues: Vec<f64>,
    pub errors: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

pub fn richardson_direct(
    profile: &DomainProfile,
    eps: f64,
    mesh: &Mesh2D,
    settings: &EigenSettings,
) -> Result<DirectEstimate> {
    let (_, coarse) = solve_direct(profile, eps, mesh, settings)?;
    let (_, fine) = solve_direct(profile, eps, &mesh.refined(), settings)?;
    let est = richardson_pair(&coarse.eigenvalues, &fine.eigenvalues);
    Ok(DirectEstimate {
        epsilon: eps,
        mesh: *mesh,
        eigenvalues: est.values,
        errors: est.errors,
        coarse: est.coarse,
        fine: est.fine,
    })
}
