//! Smooth compactly supported bumps `A · Π_i b((x_i - c_i) / h_i)` with
//! `b(t) = exp(-1 / (1 - t²))` on `(-1, 1)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The standard one-dimensional bump, zero outside `(-1, 1)`.
pub fn standard_bump(t: f64) -> f64 {
    let q = 1.0 - t * t;
    if q <= 0.0 { 0.0 } else { (-1.0 / q).exp() }
}

// b and all its derivatives vanish at ±1, so the trapezoid rule is
// spectrally accurate here.
fn trapezoid_on_unit_interval(f: impl Fn(f64) -> f64) -> f64 {
    let n = 8000;
    let h = 2.0 / n as f64;
    (1..n).map(|k| f(-1.0 + h * k as f64)).sum::<f64>() * h
}

/// `∫_{-1}^{1} b(t) dt`.
pub fn standard_bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| trapezoid_on_unit_interval(standard_bump))
}

/// `∫_{-1}^{1} b(t)² dt`.
pub fn standard_bump_square_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| trapezoid_on_unit_interval(|t| standard_bump(t).powi(2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    /// Half-width per axis.
    pub width: Vec<f64>,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, width: Vec<f64>, amplitude: f64) -> Result<Self> {
        let b = Self { center, width, amplitude };
        b.validate()?;
        Ok(b)
    }

    /// Bump scaled to total mass one.
    pub fn unit_mass(center: Vec<f64>, width: Vec<f64>) -> Result<Self> {
        let mut b = Self::new(center, width, 1.0)?;
        b.amplitude = 1.0 / b.integral();
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.is_empty() || self.center.len() != self.width.len() {
            return Err(Error::InvalidInput("bump center/width dimension mismatch".into()));
        }
        if self.width.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidInput("bump widths must be positive and finite".into()));
        }
        if !self.amplitude.is_finite() || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("bump parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for ((&xi, &c), &h) in x.iter().zip(&self.center).zip(&self.width) {
            let b = standard_bump((xi - c) / h);
            if b == 0.0 {
                return 0.0;
            }
            v *= b;
        }
        v
    }

    pub fn integral(&self) -> f64 {
        let m = standard_bump_mass();
        self.amplitude * self.width.iter().map(|h| h * m).product::<f64>()
    }

    pub fn square_integral(&self) -> f64 {
        let m = standard_bump_square_mass();
        self.amplitude * self.amplitude * self.width.iter().map(|h| h * m).product::<f64>()
    }

    /// Closed support box `(lo, hi)`.
    pub fn support(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.center.iter().zip(&self.width).map(|(c, h)| c - h).collect();
        let hi = self.center.iter().zip(&self.width).map(|(c, h)| c + h).collect();
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use approx::assert_relative_eq;

    #[test]
    fn bump_masses_match_composite_gauss() {
        // independent route: 200 panels of 16-point Gauss–Legendre
        let gl = GaussLegendre::new(16);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for k in 0..200 {
            let a = -1.0 + 0.01 * k as f64;
            m1 += gl.integrate(a, a + 0.01, standard_bump);
            m2 += gl.integrate(a, a + 0.01, |t| standard_bump(t).powi(2));
        }
        assert_relative_eq!(standard_bump_mass(), m1, max_relative = 1e-12);
        assert_relative_eq!(standard_bump_square_mass(), m2, max_relative = 1e-12);
        assert_relative_eq!(standard_bump_mass(), 0.443_993_816_168_079_4, max_relative = 1e-12);
    }

    #[test]
    fn unit_mass_bump_integrates_to_one() {
        let b = Bump::unit_mass(vec![0.3, -0.2], vec![1.5, 0.7]).unwrap();
        assert_relative_eq!(b.integral(), 1.0, max_relative = 1e-14);
        assert_eq!(b.eval(&[2.0, 0.0]), 0.0);
        assert!(b.eval(&[0.3, -0.2]) > 0.0);
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(Bump::new(vec![0.0], vec![0.0], 1.0).is_err());
        assert!(Bump::new(vec![0.0, 1.0], vec![1.0], 1.0).is_err());
    }
}
