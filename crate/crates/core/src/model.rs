//! The stretched model problem `H0 + sum delta^n H_n` on a truncated
//! oscillator eigenbasis, and its eigenvalue expansions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::{
    clip_box, decay_certificate, matrix_elements, richardson_pair, select_box_halfwidth, solve_on_grid,
    DecayCertificate, Grid1D, MatrixElementTable, SpectralResult1D,
};
use crate::perturbation::{
    brute_force_branch_fit, chebyshev_ladder, closed_form_q1_q2, resolve_sign, rs_expand, BranchFit, ClosedFormQ,
    DensePerturbationProblem, PerturbationExpansion, SignConvention,
};
use crate::potentials::{build_perturbation_terms, constant_c_terms, PerturbationFamily};
use crate::profile::DomainProfile;

/// Grading of the perturbation series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    /// Powers of `eps^alpha1`, any analytic `c`.
    General,
    /// Powers of `eps^alpha`, constant `c` only.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    /// Grid points of the coarse 1D solve; the fine solve uses `2n - 1`.
    pub grid_points: usize,
    /// Tail tolerance for the decay-selected box.
    pub box_tol: f64,
    /// Oscillator basis size; `None` means `max(4J, 40)`.
    pub basis_size: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            grid_points: 4001,
            box_tol: 1e-12,
            basis_size: None,
        }
    }
}

/// Oscillator spectrum, potentials and matrix elements for one profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub family: PerturbationFamily,
    pub grading: Grading,
    /// Box `[-left, right]` in the stretched variable.
    pub box_halfwidths: (f64, f64),
    /// Richardson-refined eigenvalues `mu_0..mu_{S-1}`.
    pub mu: Vec<f64>,
    pub mu_error: Vec<f64>,
    /// Fine-grid spectrum whose eigenfunctions carry the matrix elements.
    pub spectrum: SpectralResult1D,
    pub table: MatrixElementTable,
}

/// Decay-selected half-width that also contains the top basis mode.
fn box_for_modes(a0a1: f64, base_coeff: f64, m: u32, top_level: f64, tol: f64) -> Result<f64> {
    let l = select_box_halfwidth(a0a1, 1.0, tol)?;
    // classical turning point of the top mode, with room for its tail
    let turning = (top_level / base_coeff).powf(1.0 / m as f64);
    let mut box_l = l;
    while box_l < turning + l {
        box_l *= 2.0;
    }
    Ok(box_l)
}

impl OscillatorModel {
    /// Builds the model with `order` potentials for `levels` wanted levels.
    /// With `eps` given, the box is clipped to the stretched interval.
    pub fn build(
        profile: &DomainProfile,
        order: usize,
        levels: usize,
        grading: Grading,
        eps: Option<f64>,
        settings: &ModelSettings,
    ) -> Result<Self> {
        let family = match grading {
            Grading::General => build_perturbation_terms(profile, order)?,
            Grading::Constant => {
                if profile.c_coeffs.iter().skip(1).any(|c| *c != 0.0) {
                    return Err(Error::Parameter(
                        "constant grading needs c(x) = c0".into(),
                    ));
                }
                constant_c_terms(profile, order)?
            }
        };
        let size = settings.basis_size.unwrap_or((4 * levels).max(40));
        if levels == 0 || levels > size {
            return Err(Error::Parameter(format!("cannot expand {levels} levels in a basis of {size}")));
        }
        let base_coeff = 2.0 * family.a0 * family.a1;
        if !(base_coeff > 0.0) {
            return Err(Error::Parameter(
                "oscillator potential 2 a0 a1 y^m must be confining (c0 > 0)".into(),
            ));
        }
        let m = profile.m;
        // harmonic-like estimate of the top level, generous for m > 2
        let top_level = base_coeff.powf(2.0 / (m as f64 + 2.0)) * (4.0 * size as f64 + 4.0);
        let l = box_for_modes(family.a0 * family.a1, base_coeff, m, top_level, settings.box_tol)?;
        let box_halfwidths = match eps {
            Some(e) => clip_box(l, profile.l1, profile.l2, e.powf(profile.alpha1())),
            None => (l, l),
        };
        let base = family.base.clone();
        let v = move |y: f64| base.eval(y);
        let grid = Grid1D::new(-box_halfwidths.0, box_halfwidths.1, settings.grid_points)?;
        let coarse = solve_on_grid(&v, grid, size)?;
        let fine = solve_on_grid(&v, grid.refined(), size)?;
        let est = richardson_pair(&coarse.eigenvalues, &fine.eigenvalues);
        let table = matrix_elements(&fine, &family.terms);
        Ok(Self {
            family,
            grading,
            box_halfwidths,
            mu: est.values,
            mu_error: est.errors,
            spectrum: fine,
            table,
        })
    }

    pub fn basis_size(&self) -> usize {
        self.mu.len()
    }

    pub fn exponent_step(&self) -> f64 {
        match self.grading {
            Grading::General => self.family.alpha1,
            Grading::Constant => self.family.alpha,
        }
    }

    pub fn problem(&self) -> Result<DensePerturbationProblem> {
        DensePerturbationProblem::from_table(&self.mu, &self.table)
    }

    /// Matrix elements on the lowest `size` modes.
    pub fn truncated_table(&self, size: usize) -> MatrixElementTable {
        let size = size.min(self.basis_size());
        MatrixElementTable {
            entries: self
                .table
                .entries
                .iter()
                .map(|e| e[..size].iter().map(|row| row[..size].to_vec()).collect())
                .collect(),
        }
    }

    /// Problem restricted to the lowest `size` modes.
    pub fn truncated_problem(&self, size: usize) -> Result<DensePerturbationProblem> {
        let table = self.truncated_table(size);
        DensePerturbationProblem::from_table(&self.mu[..table.basis_size()], &table)
    }

    pub fn expansion(&self, j: usize, order: usize) -> Result<PerturbationExpansion> {
        if order > self.family.order() {
            return Err(Error::Parameter(format!(
                "order {order} exceeds the {} potentials built",
                self.family.order()
            )));
        }
        rs_expand(&self.problem()?, j, order, self.exponent_step())
    }

    pub fn closed_form(&self, j: usize) -> Result<ClosedFormQ> {
        closed_form_q1_q2(&self.table, &self.mu, j)
    }

    pub fn decay(&self) -> Vec<DecayCertificate> {
        let base = &self.family.base;
        decay_certificate(&self.spectrum, |y| base.eval(y), self.family.a0 * self.family.a1)
    }

    /// Sign convention of the literal closed forms, decided against a
    /// brute-force fit of the first two orders on a small sub-basis.
    pub fn sign_report(&self, j: usize) -> Result<SignReport> {
        let sub = (j + 12).min(self.basis_size());
        let mut problem = self.truncated_problem(sub)?;
        problem.v_orders.truncate(2);
        let d0 = fit_radius(&problem, j);
        let fit = brute_force_branch_fit(&problem, j, &chebyshev_ladder(d0, 32), 2)?;
        let literal = closed_form_q1_q2(&self.truncated_table(sub), &self.mu[..sub], j)?;
        let convention = resolve_sign(&literal, fit.q[0], fit.q[1]);
        Ok(SignReport {
            level: j,
            literal,
            fit,
            convention,
        })
    }
}

/// Ladder half-width well inside the branch's convergence disc:
/// one tenth of the level gap over the perturbation scale.
pub fn fit_radius(problem: &DensePerturbationProblem, j: usize) -> f64 {
    let mu = problem.h0_diag[j];
    let gap = problem
        .h0_diag
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, m)| (m - mu).abs())
        .fold(f64::INFINITY, f64::min);
    let scale = problem
        .v_orders
        .iter()
        .enumerate()
        .map(|(n, v)| v.norm().powf(1.0 / (n + 1) as f64))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    0.1 * (gap / scale).min(1.0).max(1e-6)
}

/// Which global sign of the literal closed forms matches the branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignReport {
    pub level: usize,
    pub literal: ClosedFormQ,
    pub fit: BranchFit,
    pub convention: SignConvention,
}

impl SignReport {
    pub fn summary(&self) -> String {
        format!(
            "level {}: literal (q1, q2) = ({:.12e}, {:.12e}); branch fit = ({:.12e}, {:.12e}); matching global sign {:+}",
            self.level,
            self.literal.q1,
            self.literal.q2,
            self.fit.q[0],
            self.fit.q[1],
            self.convention.sign
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_model_levels() {
        let p = DomainProfile::harmonic(1.0, 1.0).unwrap();
        let model = OscillatorModel::build(&p, 2, 2, Grading::General, None, &ModelSettings::default()).unwrap();
        for j in 0..4 {
            assert!((model.mu[j] - (2 * j + 1) as f64).abs() < 1e-7, "{j}: {}", model.mu[j]);
        }
        assert_eq!(model.basis_size(), 40);
        let certs = model.decay();
        for c in certs.iter().take(4) {
            assert!(c.holds, "{c:?}");
        }
        // the Hermite prefactor of psi_4 needs D about 20.7 max|psi_4|
        let ratio = certs[4].required_d / certs[4].max_abs;
        assert!((ratio - 20.7).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn constant_grading_rejects_variable_c() {
        let p = DomainProfile::new(1.0, 2, vec![0.1, 0.05], 1.0, 1.0).unwrap();
        let r = OscillatorModel::build(&p, 2, 1, Grading::Constant, None, &ModelSettings::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn clipped_box_follows_interval() {
        let p = DomainProfile::harmonic(1.0, 1.0).unwrap();
        let s = ModelSettings {
            grid_points: 801,
            ..Default::default()
        };
        let model = OscillatorModel::build(&p, 1, 1, Grading::General, Some(0.25), &s).unwrap();
        assert_eq!(model.box_halfwidths, (2.0, 2.0));
    }
}
