//! Polynomial perturbation potentials `H_n(y)` of the stretched model operator.
//!
//! After the stretch `x = eps^alpha1 y`, the shifted model operator becomes
//! `-d^2/dy^2 + 2 a0 a1 y^m + sum_n delta^n H_n(y)` with `delta = eps^alpha1`.
//! [`build_perturbation_terms`] produces the `H_n` for a general analytic
//! `c(x)`; [`constant_c_terms`] gives the closed form for constant `c`, graded
//! in `eps^alpha` instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::profile::{DomainProfile, TRANSVERSE_WEIGHT};
use crate::series::TruncatedSeries;

/// Finitely supported polynomial `sum_d coeffs[d] y^d`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPotential {
    coeffs: BTreeMap<u32, f64>,
}

impl PolynomialPotential {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(degree: u32, coeff: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(degree, coeff);
        p
    }

    pub fn from_terms(terms: &[(u32, f64)]) -> Self {
        let mut p = Self::zero();
        for &(d, c) in terms {
            p.add_term(d, c);
        }
        p
    }

    pub fn add_term(&mut self, degree: u32, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let e = self.coeffs.entry(degree).or_insert(0.0);
        *e += coeff;
        if *e == 0.0 {
            self.coeffs.remove(&degree);
        }
    }

    pub fn coeff(&self, degree: u32) -> f64 {
        self.coeffs.get(&degree).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coeffs.iter().map(|(d, c)| (*d, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.coeffs.iter().map(|(d, c)| c * y.powi(*d as i32)).sum()
    }

    /// True when every monomial has the parity of `parity` (0 even, 1 odd).
    pub fn has_parity(&self, parity: u32) -> bool {
        self.coeffs.keys().all(|d| d % 2 == parity % 2)
    }
}

/// `H0` potential plus `H_1..H_N`, with the constants they were built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationFamily {
    /// `2 a0 a1 y^m`.
    pub base: PolynomialPotential,
    /// `H_1 .. H_N`; index `n - 1` holds `H_n`.
    pub terms: Vec<PolynomialPotential>,
    pub a0: f64,
    pub a1: f64,
    pub a: f64,
    pub alpha1: f64,
    pub alpha: f64,
    /// Exponent per order: `alpha1` for the general family, `alpha` for the
    /// constant-c closed form.
    pub grading: f64,
}

impl PerturbationFamily {
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, n: usize) -> &PolynomialPotential {
        &self.terms[n - 1]
    }

    /// `H0 + sum_{n <= k} delta^n H_n` evaluated at `y`.
    pub fn partial_sum(&self, delta: f64, y: f64, k: usize) -> f64 {
        let mut v = self.base.eval(y);
        let mut d = 1.0;
        for h in self.terms.iter().take(k) {
            d *= delta;
            v += d * h.eval(y);
        }
        v
    }
}

/// Potentials `H_1..H_N` for a general analytic `c(x)`, graded by `eps^(n alpha1)`.
///
/// With `alpha_{k,s}` the coefficients of `(c/M)^(s+1)`, `beta_{k,s}` those of
/// `(c/M)^(s-2)` and `d, f, g` those of `c^2, c c', c'^2`:
///
/// `H_n = (2 a0 c_n / M) y^(n+m)
///      + sum_{k + s m = n, s >= 1} [ (s+2) a0 alpha_{k,s} y^(n+m)
///                                  + y^(s m - 2) sum_{i+j=k} beta_{i,s} y^i gamma_j ]`
///
/// where `gamma_j = (A1 d_j + A2 f_{j-1} + A3 g_{j-2}) y^j` and `A1, A2, A3`
/// carry the factor `(s - 1)`.
pub fn build_perturbation_terms(profile: &DomainProfile, order: usize) -> Result<PerturbationFamily> {
    profile.require_well()?;
    let m = profile.m as usize;
    let big_m = profile.max_height;
    let a0 = profile.a0();
    let a1 = profile.a1();

    let c = TruncatedSeries::new(&profile.c_coeffs, order);
    let dc = c.derivative();
    let d = &c * &c;
    let f = &c * &dc;
    let g = &dc * &dc;
    let c_over_m = c.scale(1.0 / big_m);

    let max_s = order / m;
    let mut alpha_tab = Vec::with_capacity(max_s + 1);
    let mut beta_tab = Vec::with_capacity(max_s + 1);
    for s in 0..=max_s {
        alpha_tab.push(c_over_m.powi(s as i32 + 1)?);
        beta_tab.push(c_over_m.powi(s as i32 - 2)?);
    }

    let mut terms = Vec::with_capacity(order);
    for n in 1..=order {
        let mut h = PolynomialPotential::zero();
        let top = (n + m) as u32;
        h.add_term(top, 2.0 * a0 * c.coeff(n as isize) / big_m);
        for s in 1..=n / m {
            let k = n - s * m;
            h.add_term(top, (s as f64 + 2.0) * a0 * alpha_tab[s].coeff(k as isize));
            if s == 1 {
                // (s - 1) factor
                continue;
            }
            let w = TRANSVERSE_WEIGHT * (s as f64 - 1.0) / (big_m * big_m);
            let mf = m as f64;
            let (a1c, a2c, a3c) = (w * mf * mf, w * 2.0 * mf, w);
            for j in 0..=k {
                let i = k - j;
                let ji = j as isize;
                let gamma = a1c * d.coeff(ji) + a2c * f.coeff(ji - 1) + a3c * g.coeff(ji - 2);
                let deg = (i + j + s * m - 2) as u32;
                h.add_term(deg, beta_tab[s].coeff(i as isize) * gamma);
            }
        }
        terms.push(h);
    }

    Ok(PerturbationFamily {
        base: PolynomialPotential::monomial(m as u32, 2.0 * a0 * a1),
        terms,
        a0,
        a1,
        a: profile.a_const(),
        alpha1: profile.alpha1(),
        alpha: profile.alpha(),
        grading: profile.alpha1(),
    })
}

/// Closed form for constant `c = c0`, graded by `eps^(n alpha)`:
/// `H_n = (n+2) a0 a1^(n+1) y^(nm+m) + (n-1) a a0 a1^(n-2) y^(nm-2)`.
pub fn constant_c_terms(profile: &DomainProfile, order: usize) -> Result<PerturbationFamily> {
    profile.require_well()?;
    let m = profile.m;
    let a0 = profile.a0();
    let a1 = profile.a1();
    let a = profile.a_const();
    let terms = (1..=order)
        .map(|n| {
            let nf = n as f64;
            let n32 = n as u32;
            let mut h = PolynomialPotential::zero();
            h.add_term(n32 * m + m, (nf + 2.0) * a0 * a1.powi(n as i32 + 1));
            h.add_term(n32 * m - 2, (nf - 1.0) * a * a0 * a1.powi(n as i32 - 2));
            h
        })
        .collect();
    Ok(PerturbationFamily {
        base: PolynomialPotential::monomial(m, 2.0 * a0 * a1),
        terms,
        a0,
        a1,
        a,
        alpha1: profile.alpha1(),
        alpha: profile.alpha(),
        grading: profile.alpha(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_profile(m: u32) -> DomainProfile {
        DomainProfile::new(1.3, m, vec![0.2], 1.0, 1.2).unwrap()
    }

    #[test]
    fn constant_c_first_two_terms() {
        let p = constant_profile(2);
        let fam = constant_c_terms(&p, 2).unwrap();
        let (a0, a1, a) = (p.a0(), p.a1(), p.a_const());
        assert_eq!(fam.term(1), &PolynomialPotential::monomial(4, 3.0 * a0 * a1 * a1));
        let h2 = fam.term(2);
        assert!((h2.coeff(6) - 4.0 * a0 * a1.powi(3)).abs() < 1e-14);
        assert!((h2.coeff(2) - a * a0).abs() < 1e-14);
        assert_eq!(h2.terms().count(), 2);
    }

    #[test]
    fn general_builder_vanishes_off_grid_for_constant_c() {
        for m in [2u32, 4, 6] {
            let p = constant_profile(m);
            let fam = build_perturbation_terms(&p, 14).unwrap();
            for n in 1..=14 {
                if n % m as usize != 0 {
                    assert!(fam.term(n).is_zero(), "m={m} n={n}: {:?}", fam.term(n));
                }
            }
        }
    }

    #[test]
    fn grading_consistency_with_constant_closed_form() {
        for m in [2u32, 4] {
            let p = constant_profile(m);
            let general = build_perturbation_terms(&p, 12).unwrap();
            let closed = constant_c_terms(&p, 12 / m as usize).unwrap();
            for k in 1..=closed.order() {
                let g = general.term(k * m as usize);
                let c = closed.term(k);
                for d in 0..=(k as u32 * m + m) {
                    let (x, y) = (g.coeff(d), c.coeff(d));
                    assert!(
                        (x - y).abs() <= 1e-12 * (1.0 + y.abs()),
                        "m={m} k={k} degree {d}: {x} vs {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_never_exceeds_n_plus_m() {
        let p = DomainProfile::new(1.0, 2, vec![0.05, 0.02, -0.01, 0.004], 1.0, 1.0).unwrap();
        let fam = build_perturbation_terms(&p, 10).unwrap();
        for n in 1..=10 {
            let deg = fam.term(n).degree().unwrap();
            assert!(deg <= n as u32 + 2);
        }
        // leading coefficient is present when c_n or the alpha term contributes
        assert_eq!(fam.term(1).degree(), Some(3));
    }

    #[test]
    fn rectangle_has_no_family() {
        let p = DomainProfile::rectangle(1.0, 1.0, 1.0).unwrap();
        assert!(build_perturbation_terms(&p, 3).is_err());
    }
}
