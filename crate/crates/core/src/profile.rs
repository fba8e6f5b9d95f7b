//! Geometry of the narrow domain `{ -l1 < x < l2, 0 < y < eps * h(x) }` with
//! `h(x) = M - c(x) x^m`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `pi^2/3 + 1/4`, the weight of `h'^2/h^2` in the reduced one-dimensional operator.
pub const TRANSVERSE_WEIGHT: f64 = PI * PI / 3.0 + 0.25;

/// Number of samples used to certify `h > 0` on the interval.
const POSITIVITY_SAMPLES: usize = 4001;

/// Height profile data. `c_coeffs` holds the Taylor coefficients of `c(x)`.
///
/// An empty `c_coeffs` denotes the flat strip `h = M` (a rectangle), which is
/// accepted by the two-dimensional solvers but has no oscillator well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    #[serde(rename = "M")]
    pub max_height: f64,
    pub m: u32,
    pub c_coeffs: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
}

impl DomainProfile {
    pub fn new(max_height: f64, m: u32, c_coeffs: Vec<f64>, l1: f64, l2: f64) -> Result<Self> {
        let p = Self {
            max_height,
            m,
            c_coeffs,
            l1,
            l2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Flat strip `(-l1, l2) x (0, eps M)`.
    pub fn rectangle(max_height: f64, l1: f64, l2: f64) -> Result<Self> {
        Self::new(max_height, 2, Vec::new(), l1, l2)
    }

    /// `m = 2` profile whose leading oscillator is exactly `-d^2/dy^2 + y^2`.
    pub fn harmonic(l1: f64, l2: f64) -> Result<Self> {
        Self::new(1.0, 2, vec![1.0 / (2.0 * PI * PI)], l1, l2)
    }

    pub fn is_rectangle(&self) -> bool {
        self.c_coeffs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_height > 0.0) || !self.max_height.is_finite() {
            return Err(Error::Config(format!("M must be positive, got {}", self.max_height)));
        }
        if self.m < 2 || self.m % 2 != 0 {
            return Err(Error::Config(format!("m must be an even integer >= 2, got {}", self.m)));
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(Error::Config(format!(
                "interval ends must be positive, got l1 = {}, l2 = {}",
                self.l1, self.l2
            )));
        }
        if self.c_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("c coefficients must be finite".into()));
        }
        if let Some(&c0) = self.c_coeffs.first() {
            if c0 == 0.0 {
                return Err(Error::Config("c0 must be nonzero".into()));
            }
        }
        let len = self.l1 + self.l2;
        for k in 0..POSITIVITY_SAMPLES {
            let x = -self.l1 + len * k as f64 / (POSITIVITY_SAMPLES - 1) as f64;
            let h = self.h(x);
            if !(h > 0.0) {
                return Err(Error::NonPositiveHeight { x, h });
            }
        }
        Ok(())
    }

    /// Errors unless the profile has a genuine well (`c0 != 0`).
    pub fn require_well(&self) -> Result<()> {
        if self.is_rectangle() {
            return Err(Error::Parameter(
                "the flat strip has no oscillator well; asymptotic expansion is undefined".into(),
            ));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.l1 + self.l2
    }

    pub fn c0(&self) -> f64 {
        self.c_coeffs.first().copied().unwrap_or(0.0)
    }

    fn c_and_derivs(&self, x: f64) -> (f64, f64, f64) {
        let (mut c, mut dc, mut ddc) = (0.0, 0.0, 0.0);
        for &a in self.c_coeffs.iter().rev() {
            ddc = ddc * x + 2.0 * dc;
            dc = dc * x + c;
            c = c * x + a;
        }
        (c, dc, ddc)
    }

    /// `(h, h', h'')` at `x`.
    pub fn h_derivs(&self, x: f64) -> (f64, f64, f64) {
        let m = self.m as i32;
        let (c, dc, ddc) = self.c_and_derivs(x);
        let xm = x.powi(m);
        let xm1 = if m >= 1 { m as f64 * x.powi(m - 1) } else { 0.0 };
        let xm2 = if m >= 2 {
            (m * (m - 1)) as f64 * x.powi(m - 2)
        } else {
            0.0
        };
        let h = self.max_height - c * xm;
        let dh = -(dc * xm + c * xm1);
        let ddh = -(ddc * xm + 2.0 * dc * xm1 + c * xm2);
        (h, dh, ddh)
    }

    pub fn h(&self, x: f64) -> f64 {
        self.h_derivs(x).0
    }

    /// Scaling exponent `alpha1 = 2/(m+2)` of the stretch `x = eps^alpha1 y`.
    pub fn alpha1(&self) -> f64 {
        2.0 / (self.m as f64 + 2.0)
    }

    /// `alpha = m * alpha1`, the grading step for constant `c`.
    pub fn alpha(&self) -> f64 {
        self.m as f64 * self.alpha1()
    }

    /// `a0 = pi^2 / M^2`.
    pub fn a0(&self) -> f64 {
        PI * PI / (self.max_height * self.max_height)
    }

    /// `a1 = c0 / M`.
    pub fn a1(&self) -> f64 {
        self.c0() / self.max_height
    }

    /// `a = (pi^2/3 + 1/4) m^2 c0^2 / pi^2`.
    pub fn a_const(&self) -> f64 {
        let m = self.m as f64;
        TRANSVERSE_WEIGHT * m * m * self.c0() * self.c0() / (PI * PI)
    }

    /// Bottom of the spectrum `pi^2 / (M eps)^2`.
    pub fn spectral_floor(&self, eps: f64) -> f64 {
        let me = self.max_height * eps;
        PI * PI / (me * me)
    }

    /// Potential of the reduced operator `A11`:
    /// `pi^2/(eps h)^2 + (pi^2/3 + 1/4) h'^2/h^2`.
    pub fn a11_potential(&self, eps: f64, x: f64) -> f64 {
        let (h, dh, _) = self.h_derivs(x);
        PI * PI / (eps * eps * h * h) + TRANSVERSE_WEIGHT * dh * dh / (h * h)
    }

    /// Scaled, shifted potential `eps^(2 alpha1) (A11 - pi^2/(M eps)^2)` at the
    /// stretched coordinate `y`, written with `delta = eps^alpha1`:
    /// `delta^-m a0 (M^2/h^2 - 1) + delta^2 (pi^2/3+1/4) h'^2/h^2` at `x = delta y`.
    pub fn scaled_potential(&self, delta: f64, y: f64) -> f64 {
        let x = delta * y;
        let (h, dh, _) = self.h_derivs(x);
        // M - h = c(x) x^m = delta^m c(x) y^m, kept free of cancellation
        let (c, _, _) = self.c_and_derivs(x);
        let drop_scaled = c * y.powi(self.m as i32);
        let well = drop_scaled * (self.max_height + h) / (h * h) * self.a0();
        well + delta * delta * TRANSVERSE_WEIGHT * dh * dh / (h * h)
    }
}
