//! Radial cell problem on an annulus, solved by damped Newton iteration.

use crate::error::{invalid, Error, Result};

/// Regularization of `|ζ′|` as `sqrt(ζ′² + REG)`.
pub const REG: f64 = 1e-12;
/// Relative tolerance on the energy decrease.
pub const TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;
const MAX_BACKTRACK: usize = 60;

/// A convex radial density `t ↦ g(t)` with first and second derivatives.
pub trait RadialDensity {
    fn value(&self, t: f64) -> f64;
    fn d1(&self, t: f64) -> f64;
    fn d2(&self, t: f64) -> f64;
    /// Shift under the square root of `|ζ′|`; zero for densities that are
    /// twice differentiable at the origin.
    fn regularization(&self) -> f64 {
        REG
    }
}

/// Piecewise-linear radial profile on log-spaced nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    /// Linear interpolation, clamped to the boundary values outside the nodes.
    pub fn eval(&self, r: f64) -> f64 {
        let n = self.radii.len();
        if r <= self.radii[0] {
            return self.values[0];
        }
        if r >= self.radii[n - 1] {
            return self.values[n - 1];
        }
        let k = self.radii.partition_point(|&x| x <= r) - 1;
        let t = (r - self.radii[k]) / (self.radii[k + 1] - self.radii[k]);
        self.values[k] + t * (self.values[k + 1] - self.values[k])
    }
}

#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub energy: f64,
    pub profile: RadialProfile,
    pub iterations: usize,
    /// Relative energy decrease of the last accepted step.
    pub achieved: f64,
}

pub fn log_nodes(inner: f64, outer: f64, segments: usize) -> Vec<f64> {
    let ratio = outer / inner;
    let mut r: Vec<f64> = (0..=segments)
        .map(|k| inner * ratio.powf(k as f64 / segments as f64))
        .collect();
    r[0] = inner;
    r[segments] = outer;
    r
}

struct Problem<'a, G: RadialDensity> {
    g: &'a G,
    h: Vec<f64>,
    w: Vec<f64>,
    omega: f64,
}

impl<G: RadialDensity> Problem<'_, G> {
    /// Discrete energy with the constant `g(sqrt(reg))` removed from every
    /// segment, so that flat segments contribute nothing.
    fn energy(&self, zeta: &[f64]) -> f64 {
        let reg = self.g.regularization();
        let floor = self.g.value(reg.sqrt());
        let mut e = 0.0;
        for k in 0..self.h.len() {
            let s = (zeta[k + 1] - zeta[k]) / self.h[k];
            e += (self.g.value((s * s + reg).sqrt()) - floor) * self.w[k];
        }
        self.omega * e
    }

    /// Per-segment first and second derivatives of `s ↦ g(sqrt(s² + reg))`.
    fn local(&self, s: f64) -> (f64, f64) {
        let reg = self.g.regularization();
        if reg == 0.0 {
            let t = s.abs();
            return (self.g.d1(t) * s.signum(), self.g.d2(t));
        }
        let t = (s * s + reg).sqrt();
        let g1 = self.g.d1(t);
        let g2 = self.g.d2(t);
        let d1 = g1 * s / t;
        let d2 = g2 * s * s / (t * t) + g1 * reg / (t * t * t);
        (d1, d2)
    }
}

/// Minimize `|𝕊^{n−1}| ∫_{r₀}^{r_K} g(|ζ′|) r^{n−1} dr` over piecewise-linear
/// profiles with `ζ(r₀) = 0`, `ζ(r_K) = z`, starting from `initial`.
pub fn solve<G: RadialDensity>(
    g: &G,
    n: usize,
    omega: f64,
    radii: Vec<f64>,
    z: f64,
    initial: Vec<f64>,
) -> Result<RadialSolution> {
    let segs = radii.len() - 1;
    if segs < 2 || initial.len() != radii.len() {
        return invalid("radial grid needs at least two segments and a matching initial profile");
    }
    let nf = n as i32;
    let h: Vec<f64> = radii.windows(2).map(|p| p[1] - p[0]).collect();
    let w: Vec<f64> = radii
        .windows(2)
        .map(|p| (p[1].powi(nf) - p[0].powi(nf)) / n as f64)
        .collect();
    let prob = Problem { g, h, w, omega };
    let mut zeta = initial;
    zeta[0] = 0.0;
    zeta[segs] = z;
    let mut energy = prob.energy(&zeta);
    let unknowns = segs - 1;
    let mut grad = vec![0.0; unknowns];
    let mut diag = vec![0.0; unknowns];
    let mut off = vec![0.0; unknowns.saturating_sub(1)];
    let mut step = vec![0.0; unknowns];
    let mut trial = zeta.clone();
    let mut achieved = f64::INFINITY;
    for it in 1..=MAX_NEWTON {
        grad.iter_mut().for_each(|v| *v = 0.0);
        diag.iter_mut().for_each(|v| *v = 0.0);
        off.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..segs {
            let s = (zeta[k + 1] - zeta[k]) / prob.h[k];
            let (d1, d2) = prob.local(s);
            let gk = omega * d1 * prob.w[k] / prob.h[k];
            let hk = omega * d2 * prob.w[k] / (prob.h[k] * prob.h[k]);
            // unknown index j corresponds to node j + 1
            if k >= 1 {
                grad[k - 1] -= gk;
                diag[k - 1] += hk;
            }
            if k < unknowns {
                grad[k] += gk;
                diag[k] += hk;
            }
            if k >= 1 && k < unknowns {
                off[k - 1] -= hk;
            }
        }
        thomas(&off, &diag, &off, &grad, &mut step)?;
        let decrement: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        let scale = energy.abs().max(f64::MIN_POSITIVE);
        if decrement <= 0.0 || 0.5 * decrement <= TOL * scale {
            return Ok(RadialSolution {
                energy,
                profile: RadialProfile { radii, values: zeta },
                iterations: it,
                achieved: (0.5 * decrement.max(0.0)) / scale,
            });
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            for j in 0..unknowns {
                trial[j + 1] = zeta[j + 1] - t * step[j];
            }
            trial[0] = 0.0;
            trial[segs] = z;
            let e = prob.energy(&trial);
            if e <= energy - 1e-4 * t * decrement {
                achieved = (energy - e) / scale;
                std::mem::swap(&mut zeta, &mut trial);
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No further decrease is representable in floating point.
            if 0.5 * decrement <= 1e3 * TOL * scale {
                return Ok(RadialSolution {
                    energy,
                    profile: RadialProfile { radii, values: zeta },
                    iterations: it,
                    achieved: 0.5 * decrement / scale,
                });
            }
            return Err(Error::NonConvergence {
                what: "radial cell problem",
                iterations: it,
                achieved: 0.5 * decrement / scale,
                wanted: TOL,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "radial cell problem",
        iterations: MAX_NEWTON,
        achieved,
        wanted: TOL,
    })
}

/// Solve the tridiagonal system `A x = d`.
pub(crate) fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let m = diag.len();
    if m == 0 {
        return Ok(());
    }
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut beta = diag[0];
    if beta.abs() < 1e-300 {
        return Err(Error::Invariant("singular tridiagonal system".into()));
    }
    c[0] = if m > 1 { upper[0] / beta } else { 0.0 };
    d[0] = rhs[0] / beta;
    for i in 1..m {
        beta = diag[i] - lower[i - 1] * c[i - 1];
        if beta.abs() < 1e-300 {
            return Err(Error::Invariant("singular tridiagonal system".into()));
        }
        c[i] = if i + 1 < m { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / beta;
    }
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let lower = [1.0, -0.5];
        let diag = [4.0, 5.0, 3.0];
        let upper = [2.0, 1.0];
        let rhs = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        thomas(&lower, &diag, &upper, &rhs, &mut x).unwrap();
        let r0 = 4.0 * x[0] + 2.0 * x[1];
        let r1 = x[0] + 5.0 * x[1] + x[2];
        let r2 = -0.5 * x[1] + 3.0 * x[2];
        assert!((r0 - 1.0).abs() < 1e-14 && (r1 - 2.0).abs() < 1e-14 && (r2 - 3.0).abs() < 1e-14);
    }

    #[test]
    fn profile_interpolates() {
        let p = RadialProfile {
            radii: vec![1.0, 2.0, 4.0],
            values: vec![0.0, 1.0, 3.0],
        };
        assert_eq!(p.eval(0.5), 0.0);
        assert_eq!(p.eval(1.5), 0.5);
        assert_eq!(p.eval(3.0), 2.0);
        assert_eq!(p.eval(9.0), 3.0);
    }
}
