//! Nonlinear q-capacities: closed forms for the model integrand, rescaled
//! densities `g_j`, truncated cell problems and averaged capacity densities.

mod radial;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use radial::{log_nodes, RadialDensity, RadialProfile, RadialSolution, REG, TOL};

use crate::error::{invalid, Result};
use crate::geometry::check_exponents;
use crate::process::MarkLaw;
use crate::quadrature::{ball_volume, gauss_legendre, sphere_area};

/// Default number of radial segments for the cell problem.
pub const DEFAULT_NODES: usize = 2000;

/// Isotropic convex integrands `f(ξ) = ψ(|ξ|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    /// `ψ(t) = t^q`.
    Model,
    /// `ψ(t) = a t^q + b t`.
    PowerLinear { a: f64, b: f64 },
    /// `ψ(t) = a((1 + t²)^{q/2} − 1)`.
    Smoothed { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityModel {
    pub n: usize,
    pub q: f64,
    pub integrand: Integrand,
    pub c1: f64,
    pub c2: f64,
}

/// `C_{n,q} = ((n−q)/(q−1))^{q−1} |𝕊^{n−1}|`.
pub fn ball_constant(n: usize, q: f64) -> f64 {
    let nf = n as f64;
    ((nf - q) / (q - 1.0)).powf(q - 1.0) * sphere_area(n)
}

/// Constant of the annulus formula; the `R → ∞` limit fixes it to `C_{n,q}`.
pub fn annulus_constant(n: usize, q: f64) -> f64 {
    ball_constant(n, q)
}

/// `(q − n)/(q − 1)`.
fn decay(n: usize, q: f64) -> f64 {
    (q - n as f64) / (q - 1.0)
}

/// `C_{n,q} ρ^{n−q}`.
pub fn cap_q_ball(n: usize, q: f64, rho: f64) -> Result<f64> {
    check_exponents(n, q)?;
    if !(rho > 0.0) {
        return invalid(format!("radius must be positive, got {rho}"));
    }
    Ok(ball_constant(n, q) * rho.powf(n as f64 - q))
}

/// `c_{n,q} (ρ^{(q−n)/(q−1)} − R^{(q−n)/(q−1)})^{1−q}`.
pub fn cap_q_annulus(n: usize, q: f64, rho: f64, outer: f64) -> Result<f64> {
    check_exponents(n, q)?;
    if !(rho > 0.0 && outer > rho) {
        return invalid(format!("annulus needs 0 < rho < R, got ({rho}, {outer})"));
    }
    let e = decay(n, q);
    let outer_term = if outer.is_infinite() { 0.0 } else { outer.powf(e) };
    Ok(annulus_constant(n, q) * (rho.powf(e) - outer_term).powf(1.0 - q))
}

/// `α` corresponding to `K = ε/α` at the critical scaling.
pub fn alpha_from_k(k: f64, n: usize, q: f64) -> f64 {
    let nf = n as f64;
    let eps = k.powf(-(nf - q) / q);
    eps / k
}

impl CapacityModel {
    pub fn new(n: usize, q: f64, integrand: Integrand) -> Result<Self> {
        check_exponents(n, q)?;
        let (c1, c2) = match integrand {
            Integrand::Model => (1.0, 1.0),
            Integrand::PowerLinear { a, b } => {
                if !(a > 0.0 && b >= 0.0) {
                    return invalid(format!("power-linear integrand needs a > 0, b >= 0, got ({a}, {b})"));
                }
                (a, a + b)
            }
            Integrand::Smoothed { a } => {
                if !(a > 0.0) {
                    return invalid(format!("smoothed integrand needs a > 0, got {a}"));
                }
                (a, a * 2f64.powf(0.5 * q - 1.0).max(1.0))
            }
        };
        Ok(Self {
            n,
            q,
            integrand,
            c1,
            c2,
        })
    }

    pub fn model(n: usize, q: f64) -> Result<Self> {
        Self::new(n, q, Integrand::Model)
    }

    pub fn is_model(&self) -> bool {
        self.integrand == Integrand::Model
    }

    pub fn ball_constant(&self) -> f64 {
        ball_constant(self.n, self.q)
    }

    /// `ψ(t)`.
    pub fn psi(&self, t: f64) -> f64 {
        self.density(1.0).value(t)
    }

    /// Leading coefficient `a` of the limit density `g(t) = a t^q`.
    pub fn limit_coefficient(&self) -> f64 {
        match self.integrand {
            Integrand::Model => 1.0,
            Integrand::PowerLinear { a, .. } | Integrand::Smoothed { a } => a,
        }
    }

    /// `g_j(t) = α^q ψ(t/α)`; `alpha = 0` gives the limit `g`.
    pub fn density(&self, alpha: f64) -> ScaledDensity {
        ScaledDensity {
            q: self.q,
            integrand: self.integrand,
            alpha,
        }
    }

    /// `φ_ρ(z)` of the limit density in closed form: `a C_{n,q} |z|^q ρ^{n−q}`.
    pub fn phi_closed(&self, rho: f64, z: f64) -> f64 {
        self.limit_coefficient() * ball_constant(self.n, self.q) * z.abs().powf(self.q) * rho.powf(self.n as f64 - self.q)
    }

    /// Model truncated capacity in closed form, `c_{n,q}|z|^q(ρ^e − R^e)^{1−q}`.
    pub fn phi_truncated_closed(&self, rho: f64, outer: f64, z: f64) -> Result<f64> {
        Ok(cap_q_annulus(self.n, self.q, rho, outer)? * z.abs().powf(self.q))
    }
}

/// The rescaled density `g_j`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledDensity {
    q: f64,
    integrand: Integrand,
    alpha: f64,
}

impl RadialDensity for ScaledDensity {
    fn value(&self, t: f64) -> f64 {
        let q = self.q;
        match self.integrand {
            Integrand::Model => t.powf(q),
            Integrand::PowerLinear { a, b } => a * t.powf(q) + b * self.alpha.powf(q - 1.0) * t,
            Integrand::Smoothed { a } => {
                let al2 = self.alpha * self.alpha;
                a * ((al2 + t * t).powf(0.5 * q) - al2.powf(0.5 * q))
            }
        }
    }

    fn d1(&self, t: f64) -> f64 {
        let q = self.q;
        match self.integrand {
            Integrand::Model => q * t.powf(q - 1.0),
            Integrand::PowerLinear { a, b } => a * q * t.powf(q - 1.0) + b * self.alpha.powf(q - 1.0),
            Integrand::Smoothed { a } => a * q * t * (self.alpha * self.alpha + t * t).powf(0.5 * q - 1.0),
        }
    }

    fn d2(&self, t: f64) -> f64 {
        let q = self.q;
        match self.integrand {
            Integrand::Model => q * (q - 1.0) * t.powf(q - 2.0),
            Integrand::PowerLinear { a, .. } => a * q * (q - 1.0) * t.powf(q - 2.0),
            Integrand::Smoothed { a } => {
                let al2 = self.alpha * self.alpha;
                a * q * (al2 + t * t).powf(0.5 * q - 2.0) * (al2 + (q - 1.0) * t * t)
            }
        }
    }

    fn regularization(&self) -> f64 {
        match self.integrand {
            Integrand::Smoothed { .. } if self.alpha > 0.0 => 0.0,
            _ => REG,
        }
    }
}

/// `g_j(t) = α_{ε_j}^q ψ(t/α_{ε_j})`.
pub fn g_scaled(model: &CapacityModel, eps: f64, t: f64) -> Result<f64> {
    let (alpha, _) = crate::geometry::critical_scale(eps, model.n, model.q)?;
    Ok(model.density(alpha).value(t.abs()))
}

/// Truncated cell problem `φ^j_{θ,ρ}(z)` on `B_{θK}` with its minimizing profile.
pub fn phi_truncated_solution(
    model: &CapacityModel,
    theta: f64,
    k: f64,
    rho: f64,
    z: f64,
    nodes: usize,
) -> Result<RadialSolution> {
    let outer = theta * k;
    if !(rho > 0.0 && theta > 0.0 && k > 0.0) {
        return invalid("cell problem parameters must be positive");
    }
    if outer < 2.0 * rho {
        return invalid(format!("cell problem needs theta K >= 2 rho, got theta K = {outer}, rho = {rho}"));
    }
    if nodes < 100 {
        return invalid(format!("cell problem needs at least 100 nodes, got {nodes}"));
    }
    let alpha = alpha_from_k(k, model.n, model.q);
    solve_annulus(model, model.density(alpha), rho, outer, z.abs(), nodes)
}

fn solve_annulus(
    model: &CapacityModel,
    density: ScaledDensity,
    rho: f64,
    outer: f64,
    z: f64,
    nodes: usize,
) -> Result<RadialSolution> {
    let radii = log_nodes(rho, outer, nodes);
    let e = decay(model.n, model.q);
    let (a, b) = (rho.powf(e), outer.powf(e));
    let initial: Vec<f64> = radii.iter().map(|r| z * (a - r.powf(e)) / (a - b)).collect();
    if z == 0.0 {
        return Ok(RadialSolution {
            energy: 0.0,
            profile: RadialProfile {
                values: vec![0.0; radii.len()],
                radii,
            },
            iterations: 0,
            achieved: 0.0,
        });
    }
    radial::solve(&density, model.n, sphere_area(model.n), radii, z, initial)
}

pub fn phi_truncated(model: &CapacityModel, theta: f64, k: f64, rho: f64, z: f64, nodes: usize) -> Result<f64> {
    Ok(phi_truncated_solution(model, theta, k, rho, z, nodes)?.energy)
}

/// `φ_ρ(z)` of the limit density: closed form for the model integrand,
/// otherwise three solves at `R = 10²ρ, 10³ρ, 10⁴ρ` extrapolated in `R^{(q−n)/(q−1)}`.
pub fn phi_infinite(model: &CapacityModel, rho: f64, z: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return invalid(format!("radius must be positive, got {rho}"));
    }
    if model.is_model() {
        return Ok(model.phi_closed(rho, z));
    }
    phi_infinite_numeric(model, rho, z, DEFAULT_NODES)
}

/// The extrapolated solver value, also for the model integrand.
pub fn phi_infinite_numeric(model: &CapacityModel, rho: f64, z: f64, nodes: usize) -> Result<f64> {
    let e = decay(model.n, model.q);
    let density = model.density(0.0);
    let mut xs = [0.0; 3];
    let mut ys = [0.0; 3];
    for (i, f) in [1e2, 1e3, 1e4].into_iter().enumerate() {
        let outer = f * rho;
        xs[i] = outer.powf(e);
        ys[i] = solve_annulus(model, density, rho, outer, z.abs(), nodes)?.energy;
    }
    // quadratic through the three points, evaluated at x = 0
    let l0 = xs[1] * xs[2] / ((xs[0] - xs[1]) * (xs[0] - xs[2]));
    let l1 = xs[0] * xs[2] / ((xs[1] - xs[0]) * (xs[1] - xs[2]));
    let l2 = xs[0] * xs[1] / ((xs[2] - xs[0]) * (xs[2] - xs[1]));
    Ok(l0 * ys[0] + l1 * ys[1] + l2 * ys[2])
}

/// `φ(z) = ∫ φ_ρ(z) h(ρ) dρ`.
pub fn average_capacity_density(model: &CapacityModel, law: &MarkLaw, z: f64) -> Result<f64> {
    law.validate()?;
    let p = model.n as f64 - model.q;
    let moment = law.moment(p)?;
    if model.is_model() {
        return Ok(model.phi_closed(1.0, z) * moment);
    }
    if let MarkLaw::Constant { rho0 } = law {
        return phi_infinite(model, *rho0, z);
    }
    let lo = law.effective_lower(1e-8).ln();
    let hi = law.effective_upper(1e-8).ln();
    let (x, w) = gauss_legendre(24);
    let panels = 4;
    let h = (hi - lo) / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|pnl| {
            let mid = lo + (pnl as f64 + 0.5) * h;
            x.iter().zip(&w).map(move |(xi, wi)| (mid + 0.5 * h * xi, 0.5 * h * wi)).collect::<Vec<_>>()
        })
        .collect();
    let vals: Vec<f64> = nodes
        .par_iter()
        .map(|&(u, wt)| {
            let rho = u.exp();
            phi_infinite(model, rho, z).map(|v| wt * v * law.pdf(rho) * rho)
        })
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum())
}

/// Constants `(C₁, C₂, C₃, C₄)` of the truncated-capacity sandwich.
pub fn sandwich_constants(model: &CapacityModel) -> (f64, f64, f64, f64) {
    let c = annulus_constant(model.n, model.q);
    let b = ball_volume(model.n);
    (model.c1 * c, model.c1 * b, model.c2 * c, model.c2 * b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub n: usize,
    pub q: f64,
    pub rho: f64,
    pub theta: f64,
    /// `K`; infinite for the whole-space problem.
    pub k: f64,
    pub z: f64,
    pub value: f64,
    pub closed_form: Option<f64>,
    pub rel_err: Option<f64>,
}

/// One row per `(ρ, R, |z|)`; `R = ∞` evaluates `φ_ρ`. Finite rows use `θ = 1`, `K = R`.
pub fn capacity_table(model: &CapacityModel, rhos: &[f64], outers: &[f64], zs: &[f64], nodes: usize) -> Result<Vec<CapacityRow>> {
    let mut jobs = Vec::new();
    for &rho in rhos {
        for &outer in outers {
            for &z in zs {
                jobs.push((rho, outer, z));
            }
        }
    }
    jobs.par_iter()
        .map(|&(rho, outer, z)| {
            let (value, closed) = if outer.is_infinite() {
                let v = if model.is_model() {
                    phi_infinite_numeric(model, rho, z, nodes)?
                } else {
                    phi_infinite(model, rho, z)?
                };
                (v, model.is_model().then(|| model.phi_closed(rho, z)))
            } else {
                let v = phi_truncated(model, 1.0, outer, rho, z, nodes)?;
                let c = if model.is_model() {
                    Some(model.phi_truncated_closed(rho, outer, z)?)
                } else {
                    None
                };
                (v, c)
            };
            let rel_err = closed.map(|c| if c == 0.0 { value.abs() } else { (value - c).abs() / c.abs() });
            Ok(CapacityRow {
                n: model.n,
                q: model.q,
                rho,
                theta: 1.0,
                k: outer,
                z,
                value,
                closed_form: closed,
                rel_err,
            })
        })
        .collect()
}

pub fn write_capacity_csv<W: Write>(rows: &[CapacityRow], mut out: W) -> Result<()> {
    writeln!(out, "# schema=capacity-table/v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "q", "rho", "theta", "K", "z", "value", "closed_form", "rel_err"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{}", r.q),
            format!("{:.17e}", r.rho),
            format!("{}", r.theta),
            if r.k.is_infinite() { "inf".to_string() } else { format!("{:.17e}", r.k) },
            format!("{:.17e}", r.z),
            format!("{:.17e}", r.value),
            opt(r.closed_form),
            opt(r.rel_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn ball_capacity_values() {
        assert_relative_eq!(cap_q_ball(3, 2.0, 1.0).unwrap(), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(cap_q_ball(3, 2.0, 3.0).unwrap(), 12.0 * PI, max_relative = 1e-15);
        assert!(cap_q_ball(3, 3.5, 1.0).is_err());
        assert!(cap_q_ball(2, 1.5, 0.0).is_err());
    }

    #[test]
    fn annulus_capacity_values() {
        assert_relative_eq!(cap_q_annulus(3, 2.0, 1.0, 100.0).unwrap(), 4.0 * PI / 0.99, max_relative = 1e-14);
        let far = cap_q_annulus(3, 1.5, 1.0, 1e6).unwrap();
        assert_relative_eq!(far, cap_q_ball(3, 1.5, 1.0).unwrap(), max_relative = 1e-3);
        assert!(cap_q_annulus(3, 2.0, 2.0, 2.0).is_err());
        let a = cap_q_annulus(2, 1.5, 1.0, 5.0).unwrap();
        let b = cap_q_annulus(2, 1.5, 1.0, 50.0).unwrap();
        assert!(a > b);
    }

    #[test]
    fn scaled_densities() {
        let m = CapacityModel::new(3, 2.0, Integrand::PowerLinear { a: 1.0, b: 1.0 }).unwrap();
        let eps = 0.1;
        let alpha: f64 = 1e-3;
        assert_relative_eq!(g_scaled(&m, eps, 2.0).unwrap(), 4.0 + alpha * 2.0, max_relative = 1e-14);
        let model = CapacityModel::model(3, 1.5).unwrap();
        assert_relative_eq!(g_scaled(&model, 0.3, 1.7).unwrap(), 1.7f64.powf(1.5), max_relative = 1e-14);
    }

    #[test]
    fn density_derivatives_match_differences() {
        let h = 1e-6;
        for integrand in [Integrand::Model, Integrand::PowerLinear { a: 2.0, b: 0.5 }, Integrand::Smoothed { a: 1.5 }] {
            let m = CapacityModel::new(3, 1.7, integrand).unwrap();
            let g = m.density(0.3);
            for t in [0.2, 1.0, 3.0] {
                let fd1 = (g.value(t + h) - g.value(t - h)) / (2.0 * h);
                let fd2 = (g.d1(t + h) - g.d1(t - h)) / (2.0 * h);
                assert_relative_eq!(g.d1(t), fd1, max_relative = 1e-6);
                assert_relative_eq!(g.d2(t), fd2, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn solver_matches_model_annulus() {
        let m = CapacityModel::model(3, 2.0).unwrap();
        let v = phi_truncated(&m, 1.0, 100.0, 1.0, 1.0, 2000).unwrap();
        assert_relative_eq!(v, 4.0 * PI / 0.99, max_relative = 1e-3);
        assert_eq!(phi_truncated(&m, 1.0, 100.0, 1.0, 0.0, 200).unwrap(), 0.0);
        assert!(phi_truncated(&m, 0.01, 100.0, 1.0, 1.0, 200).is_err());
        assert!(phi_truncated(&m, 1.0, 100.0, 1.0, 1.0, 50).is_err());
    }

    #[test]
    fn solver_handles_q_below_two_and_non_model() {
        let m = CapacityModel::model(3, 1.5).unwrap();
        let v = phi_truncated(&m, 1.0, 50.0, 1.0, 1.0, 1000).unwrap();
        assert_relative_eq!(v, cap_q_annulus(3, 1.5, 1.0, 50.0).unwrap(), max_relative = 1e-2);
        let s = CapacityModel::new(3, 1.5, Integrand::Smoothed { a: 1.0 }).unwrap();
        let v = phi_infinite(&s, 1.0, 2.0).unwrap();
        assert_relative_eq!(v, s.phi_closed(1.0, 2.0), max_relative = 1e-2);
    }

    #[test]
    fn extrapolated_capacity_density() {
        let m = CapacityModel::model(3, 2.0).unwrap();
        let v = phi_infinite_numeric(&m, 1.0, 2.0, 2000).unwrap();
        assert_relative_eq!(v, 16.0 * PI, max_relative = 1e-3);
        let p = CapacityModel::new(3, 2.0, Integrand::PowerLinear { a: 2.0, b: 1.0 }).unwrap();
        assert_relative_eq!(phi_infinite(&p, 1.5, 1.0).unwrap(), p.phi_closed(1.5, 1.0), max_relative = 1e-3);
    }

    #[test]
    fn averaged_density() {
        let m = CapacityModel::model(3, 2.0).unwrap();
        let law = MarkLaw::Pareto { rho_min: 1.0, beta: 4.0 };
        assert_relative_eq!(average_capacity_density(&m, &law, 1.0).unwrap(), 6.0 * PI, max_relative = 1e-14);
        let c = MarkLaw::Constant { rho0: 1.0 };
        assert_relative_eq!(average_capacity_density(&m, &c, 1.0).unwrap(), 4.0 * PI, max_relative = 1e-14);
        assert!(average_capacity_density(&m, &MarkLaw::Pareto { rho_min: 1.0, beta: 1.5 }, 1.0).is_err());
        let p = CapacityModel::new(3, 2.0, Integrand::PowerLinear { a: 1.0, b: 1.0 }).unwrap();
        let quad = average_capacity_density(&p, &law, 1.0).unwrap();
        assert_relative_eq!(quad, 6.0 * PI, max_relative = 1e-2);
    }

    #[test]
    fn table_has_zero_rows_for_zero_amplitude() {
        let m = CapacityModel::model(3, 2.0).unwrap();
        let rows = capacity_table(&m, &[1.0], &[100.0, f64::INFINITY], &[0.0, 1.0], 500).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            if r.z == 0.0 {
                assert_eq!(r.value, 0.0);
            } else {
                assert!(r.rel_err.unwrap() < 1e-2);
            }
        }
    }
}
