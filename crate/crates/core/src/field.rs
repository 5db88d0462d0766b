//! Smooth compactly supported test fields.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::DomainDescriptor;
use crate::quadrature::{gauss_legendre_composite, sphere_area};

/// `u(x) = A exp(1 − 1/(1 − |x − c|²/w²))` on `|x − c| < w`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub centre: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

const ORDER: usize = 16;
const PANELS: usize = 64;

impl Bump {
    pub fn centred(dim: usize, width: f64, amplitude: f64) -> Self {
        Self {
            centre: vec![0.0; dim],
            width,
            amplitude,
        }
    }

    pub fn validate(&self, domain: &DomainDescriptor) -> Result<()> {
        if self.centre.len() != domain.dim {
            return invalid("bump centre dimension differs from the domain");
        }
        if !(self.width > 0.0) || !self.amplitude.is_finite() {
            return invalid("bump needs positive width and finite amplitude");
        }
        if domain.boundary_distance(&self.centre) <= self.width {
            return invalid("bump support must lie strictly inside the domain");
        }
        Ok(())
    }

    /// Radial profile `u(r)`.
    pub fn profile(&self, r: f64) -> f64 {
        let s2 = (r / self.width).powi(2);
        if s2 >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
        }
    }

    /// `u′(r)`.
    pub fn profile_slope(&self, r: f64) -> f64 {
        let s = r / self.width;
        if s >= 1.0 {
            return 0.0;
        }
        let one = 1.0 - s * s;
        self.profile(r) * (-2.0 * s / (one * one)) / self.width
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.centre).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile(self.radius(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.radius(x);
        if r == 0.0 || r >= self.width {
            return vec![0.0; x.len()];
        }
        let d = self.profile_slope(r) / r;
        x.iter().zip(&self.centre).map(|(a, b)| d * (a - b)).collect()
    }

    /// `max |∇u|` over a fine radial sample.
    pub fn max_slope(&self) -> f64 {
        let mut best = 0.0f64;
        for k in 1..4096 {
            best = best.max(self.profile_slope(self.width * k as f64 / 4096.0).abs());
        }
        best
    }

    /// `∫_{ℝⁿ} F(u(x), |∇u(x)|) dx` by radial Gauss–Legendre quadrature.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.centre.len();
        let integrand = |r: f64| f(self.profile(r), self.profile_slope(r).abs()) * r.powi(n as i32 - 1);
        sphere_area(n) * gauss_legendre_composite(integrand, 0.0, self.width, ORDER, PANELS)
    }

    /// Same integral restricted to radii in `[r1, r2]`.
    pub fn integrate_shell(&self, r1: f64, r2: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.centre.len();
        let (a, b) = (r1.max(0.0), r2.min(self.width));
        if b <= a {
            return 0.0;
        }
        let integrand = |r: f64| f(self.profile(r), self.profile_slope(r).abs()) * r.powi(n as i32 - 1);
        sphere_area(n) * gauss_legendre_composite(integrand, a, b, ORDER, PANELS)
    }

    /// `∫ |u|^q`.
    pub fn lq_norm_q(&self, q: f64) -> f64 {
        self.integrate(|u, _| u.abs().powf(q))
    }

    /// `∫ |∇u|^q`.
    pub fn dirichlet_q(&self, q: f64) -> f64 {
        self.integrate(|_, g| g.powf(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;

    #[test]
    fn bump_shape() {
        let b = Bump::centred(3, 0.4, 2.0);
        assert_eq!(b.value(&[0.0; 3]), 2.0);
        assert_eq!(b.value(&[0.4, 0.0, 0.0]), 0.0);
        assert!(b.validate(&DomainDescriptor::unit_cube(3)).is_ok());
        assert!(Bump::centred(3, 0.5, 1.0).validate(&DomainDescriptor::unit_cube(3)).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let b = Bump {
            centre: vec![0.1, -0.05, 0.0],
            width: 0.3,
            amplitude: 1.3,
        };
        let x = [0.2, 0.0, 0.07];
        let g = b.gradient(&x);
        let h = 1e-6;
        for d in 0..3 {
            let mut p = x;
            let mut m = x;
            p[d] += h;
            m[d] -= h;
            let fd = (b.value(&p) - b.value(&m)) / (2.0 * h);
            assert!((fd - g[d]).abs() < 1e-7);
        }
    }

    #[test]
    fn radial_integrals_match_adaptive_reference() {
        let b = Bump::centred(3, 0.4, 1.0);
        let reference = 4.0 * std::f64::consts::PI
            * adaptive_simpson(&|r: f64| b.profile(r).powi(2) * r * r, 0.0, 0.4, 1e-14);
        assert!((b.lq_norm_q(2.0) - reference).abs() < 1e-10 * reference);
        let inner = b.integrate_shell(0.0, 0.2, |_, g| g * g);
        let outer = b.integrate_shell(0.2, 0.4, |_, g| g * g);
        assert!((inner + outer - b.dirichlet_q(2.0)).abs() < 1e-10);
    }
}
