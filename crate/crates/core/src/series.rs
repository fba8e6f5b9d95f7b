//! Truncated power series in one variable.
//!
//! A [`TruncatedSeries`] of order `N` stores the coefficients of
//! `1, x, …, x^N`; every operation silently drops terms beyond the order of
//! its result. This is the coefficient engine behind the expansion of the
//! height profile into perturbation potentials.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// Builds a series of the given order, zero-padding or truncating `coeffs`.
    pub fn new(coeffs: &[f64], order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        for (dst, src) in c.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        Self { coeffs: c }
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn one(order: usize) -> Self {
        Self::constant(1.0, order)
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = value;
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^k`; zero for negative or out-of-range indices.
    pub fn coeff(&self, k: isize) -> f64 {
        if k < 0 {
            return 0.0;
        }
        self.coeffs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(&self.coeffs, order)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Cauchy product truncated at `order`.
    pub fn mul_to(&self, other: &Self, order: usize) -> Self {
        let mut out = vec![0.0; order + 1];
        for (i, a) in self.coeffs.iter().enumerate().take(order + 1) {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate().take(order + 1 - i) {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// Formal derivative; the result keeps the same order (top coefficient 0).
    pub fn derivative(&self) -> Self {
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        for k in 1..=n {
            out[k - 1] = k as f64 * self.coeffs[k];
        }
        Self { coeffs: out }
    }

    /// Multiplicative inverse through order `N`. Requires a nonzero constant term.
    pub fn recip(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0 == 0.0 {
            return Err(Error::Domain(
                "reciprocal of a series with zero constant term".into(),
            ));
        }
        let n = self.order();
        let mut b = vec![0.0; n + 1];
        b[0] = 1.0 / a0;
        for k in 1..=n {
            let s: f64 = (1..=k).map(|i| self.coeffs[i] * b[k - i]).sum();
            b[k] = -s / a0;
        }
        Ok(Self { coeffs: b })
    }

    /// Integer power through order `N`; negative powers go through [`recip`](Self::recip).
    pub fn powi(&self, p: i32) -> Result<Self> {
        let n = self.order();
        if p == 0 {
            return Ok(Self::one(n));
        }
        let base = if p < 0 { self.recip()? } else { self.clone() };
        let mut e = p.unsigned_abs();
        let mut acc = Self::one(n);
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_to(&sq, n);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.mul_to(&sq, n);
            }
        }
        Ok(acc)
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl Add for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn add(self, rhs: Self) -> TruncatedSeries {
        let n = self.order().min(rhs.order());
        TruncatedSeries {
            coeffs: (0..=n).map(|k| self.coeffs[k] + rhs.coeffs[k]).collect(),
        }
    }
}

impl Sub for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn sub(self, rhs: Self) -> TruncatedSeries {
        let n = self.order().min(rhs.order());
        TruncatedSeries {
            coeffs: (0..=n).map(|k| self.coeffs[k] - rhs.coeffs[k]).collect(),
        }
    }
}

impl Neg for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn neg(self) -> TruncatedSeries {
        self.scale(-1.0)
    }
}

impl Mul for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn mul(self, rhs: Self) -> TruncatedSeries {
        self.mul_to(rhs, self.order().min(rhs.order()))
    }
}
