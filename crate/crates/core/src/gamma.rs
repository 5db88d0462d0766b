//! Recovery-type fields on perforated domains and their energy accounting.
//!
//! Around every very good hole the bump `u` is replaced by the optimal
//! annular profile going from 0 on the hole to `ū_i` at radius `θε`; a shell
//! `θε < |x − c_i| < 5θε/4` blends `ū_i` back into `u`. Holes that are not
//! very good are charged the capacity of `B_{α_ε ρ_i} ⊂ B_{2α_ε ρ_i}` times
//! the local supremum of `|u|^q`.

use serde::Serialize;

use crate::capacity::{cap_q_annulus, phi_truncated_solution, CapacityModel, RadialProfile, TOL};
use crate::classify::HoleClassification;
use crate::error::{Error, Result};
use crate::field::Bump;
use crate::geometry::PerforatedDomain;
use crate::quadrature::{ball_volume, ShellResolution, ShellRule};
use crate::slln::{boundary_average, capacitary_target, run_replicas, StudyConfig, StudyKind, StudyReport};

/// Outer radius of the blending shell relative to the patch radius.
pub const SHELL_FACTOR: f64 = 1.25;

#[derive(Debug, Clone)]
pub enum PatchProfile {
    /// `ū (a^e − r^e)/(a^e − b^e)` with `e = (q − n)/(q − 1)`.
    Model { exponent: f64 },
    /// Solver profile in blown-up radius `r/α_ε`.
    Numeric(RadialProfile),
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub hole: usize,
    pub centre: Vec<f64>,
    /// `θε`.
    pub radius: f64,
    /// `α_ε ρ_i`.
    pub hole_radius: f64,
    pub boundary_value: f64,
    /// `ε^n φ^j_{θ,ρ_i}(ū_i)`.
    pub energy: f64,
    pub profile: PatchProfile,
}

impl Patch {
    /// Value of the patch profile at distance `r` from the centre, `r ≤ θε`.
    pub fn profile_value(&self, r: f64, alpha: f64) -> f64 {
        if r <= self.hole_radius {
            return 0.0;
        }
        match &self.profile {
            PatchProfile::Model { exponent } => {
                let a = self.hole_radius.powf(*exponent);
                let b = self.radius.powf(*exponent);
                self.boundary_value * (a - r.min(self.radius).powf(*exponent)) / (a - b)
            }
            PatchProfile::Numeric(p) => p.eval(r / alpha),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryField {
    pub bump: Bump,
    pub patches: Vec<Patch>,
    pub eps: f64,
    pub alpha: f64,
    pub theta: f64,
    /// Largest solver tolerance used by a numeric patch; zero for closed forms.
    pub eta: f64,
    patch_index: Option<crate::spatial::CellIndex>,
}

impl RecoveryField {
    fn locate(&self, x: &[f64]) -> Option<(usize, f64)> {
        let index = self.patch_index.as_ref()?;
        let reach = SHELL_FACTOR * self.theta * self.eps;
        let mut found = None;
        index.for_each_within(x, reach, |p, d2| {
            if found.is_none() {
                found = Some((p, d2.sqrt()));
            }
        });
        found
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.locate(x) {
            None => self.bump.value(x),
            Some((p, r)) => {
                let patch = &self.patches[p];
                if r <= patch.radius {
                    patch.profile_value(r, self.alpha)
                } else {
                    let t = (r - patch.radius) / ((SHELL_FACTOR - 1.0) * patch.radius);
                    patch.boundary_value + t * (self.bump.value(x) - patch.boundary_value)
                }
            }
        }
    }
}

/// Attach optimal annular profiles to the very good holes.
pub fn build_recovery(
    domain: &PerforatedDomain,
    cls: &HoleClassification,
    bump: &Bump,
    model: &CapacityModel,
    shell: &ShellRule,
    cell_nodes: usize,
) -> Result<RecoveryField> {
    let (Some(m), Some(theta)) = (cls.m, cls.theta) else {
        return Err(Error::Invariant("classification lacks the VG/MG split".into()));
    };
    let eps = domain.eps;
    let radius = theta * eps;
    let exponent = (model.q - model.n as f64) / (model.q - 1.0);
    let mut patches = Vec::with_capacity(cls.vg.len());
    let mut eta: f64 = 0.0;
    for &h in &cls.vg {
        let c = domain.centre(h);
        let z = boundary_average(bump, c, eps, theta, m, shell)?;
        let rho = domain.marks[h];
        let en = eps.powi(domain.n as i32);
        let (energy, profile) = if model.is_model() {
            let e = cap_q_annulus(model.n, model.q, rho, theta * domain.k)? * z.abs().powf(model.q);
            (en * e, PatchProfile::Model { exponent })
        } else {
            let sol = phi_truncated_solution(model, theta, domain.k, rho, z, cell_nodes)?;
            eta = eta.max(TOL);
            let mut prof = sol.profile;
            if z < 0.0 {
                prof.values.iter_mut().for_each(|v| *v = -*v);
            }
            (en * sol.energy, PatchProfile::Numeric(prof))
        };
        patches.push(Patch {
            hole: h,
            centre: c.to_vec(),
            radius,
            hole_radius: domain.radii[h],
            boundary_value: z,
            energy,
            profile,
        });
    }
    let reach = 2.0 * SHELL_FACTOR * radius;
    let centres: Vec<f64> = patches.iter().flat_map(|p| p.centre.iter().copied()).collect();
    let patch_index = if patches.is_empty() {
        None
    } else {
        Some(crate::spatial::CellIndex::new(centres, domain.n, reach))
    };
    if let Some(index) = &patch_index {
        for (i, p) in patches.iter().enumerate() {
            let mut clash = None;
            index.for_each_within(&p.centre, reach, |j, d2| {
                if j != i && d2 < reach * reach {
                    clash = Some(j);
                }
            });
            if let Some(j) = clash {
                return Err(Error::Invariant(format!("recovery patches {i} and {j} overlap")));
            }
            for k in domain.query_neighbors(&p.centre, SHELL_FACTOR * radius + domain.radii.iter().copied().fold(0.0, f64::max)) {
                let gap = crate::spatial::dist2(&p.centre, domain.centre(k)).sqrt() - domain.radii[k];
                if k != p.hole && gap < SHELL_FACTOR * radius {
                    return Err(Error::Invariant(format!("hole {k} intersects the patch of hole {}", p.hole)));
                }
            }
        }
    }
    Ok(RecoveryField {
        bump: bump.clone(),
        patches,
        eps,
        alpha: domain.alpha,
        theta,
        eta,
        patch_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `∫_{D ∖ ∪ B_{θε}} f(∇u)`.
    pub bulk: f64,
    /// `ε^n Σ_{VG} φ^j_{θ,ρ_i}(ū_i)`.
    pub capacitary: f64,
    /// Blending-shell energy in excess of `∫ f(∇u)` over the shells.
    pub mismatch: f64,
    /// `Σ_{bad ∪ MG} cap_q(B_{α_ε ρ_i}, B_{2α_ε ρ_i}) sup |u|^q`.
    pub bad_region: f64,
    pub corrections: f64,
    pub total: f64,
    pub target: f64,
    pub gap: f64,
    pub eta: f64,
}

impl EnergyBreakdown {
    pub fn recompute_total(&self) -> f64 {
        self.bulk + self.capacitary + self.mismatch + self.bad_region
    }
}

/// `∫_D f(∇u) + λ ∫_D φ(u)`.
pub fn f0_target(config: &StudyConfig, model: &CapacityModel) -> Result<f64> {
    Ok(config.bump.integrate(|_, g| model.psi(g)) + capacitary_target(config, model)?)
}

pub fn evaluate_energy(
    recovery: &RecoveryField,
    domain: &PerforatedDomain,
    cls: &HoleClassification,
    model: &CapacityModel,
    quadrature: ShellResolution,
    target: f64,
) -> Result<EnergyBreakdown> {
    let bump = &recovery.bump;
    let n = domain.n;
    let rule = ShellRule::new(n, quadrature);
    let f = |g: &[f64]| model.psi(g.iter().map(|v| v * v).sum::<f64>().sqrt());

    let full = bump.integrate(|_, g| model.psi(g));
    let mut removed = 0.0;
    let mut capacitary = 0.0;
    let mut mismatch = 0.0;
    for p in &recovery.patches {
        let r = p.radius;
        let vol_ball = ball_volume(n) * r.powi(n as i32);
        removed += vol_ball * rule.average(&p.centre, 0.0, r, |x| f(&bump.gradient(x)));
        capacitary += p.energy;
        let r2 = SHELL_FACTOR * r;
        let vol_shell = ball_volume(n) * (r2.powi(n as i32) - r.powi(n as i32));
        let blended = rule.average(&p.centre, r, r2, |x| {
            let d: Vec<f64> = x.iter().zip(&p.centre).map(|(a, b)| a - b).collect();
            let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let t = (dist - r) / (r2 - r);
            let u = bump.value(x);
            let gu = bump.gradient(x);
            let jump = (u - p.boundary_value) / (r2 - r);
            let g: Vec<f64> = gu.iter().zip(&d).map(|(gi, di)| t * gi + jump * di / dist).collect();
            f(&g) - f(&gu)
        });
        mismatch += vol_shell * blended;
    }
    let bulk = full - removed;

    let mut covered = vec![false; domain.len()];
    for &h in cls.bad.iter().chain(&cls.mg) {
        covered[h] = true;
    }
    for &h in &cls.vg {
        if covered[h] {
            return Err(Error::Invariant(format!("hole {h} is very good and corrected")));
        }
        covered[h] = true;
    }
    if let Some(h) = covered.iter().position(|c| !c) {
        return Err(Error::Invariant(format!("hole {h} is neither very good nor corrected")));
    }
    let slope = bump.max_slope();
    let mut bad_region = 0.0;
    for &h in cls.bad.iter().chain(&cls.mg) {
        let a = domain.radii[h];
        let sup = bump.value(domain.centre(h)).abs() + slope * 2.0 * a;
        if sup > 0.0 {
            bad_region += cap_q_annulus(n, model.q, a, 2.0 * a)? * model.c2 * sup.powf(model.q);
        }
    }

    let corrections = mismatch + bad_region;
    let total = bulk + capacitary + mismatch + bad_region;
    let gap = if target == 0.0 { total.abs() } else { (total - target).abs() / target.abs() };
    Ok(EnergyBreakdown {
        bulk,
        capacitary,
        mismatch,
        bad_region,
        corrections,
        total,
        target,
        gap,
        eta: recovery.eta,
    })
}

pub const GAMMA_COLUMNS: [&str; 9] = [
    "bulk",
    "capacitary",
    "mismatch",
    "bad_region",
    "corrections",
    "total",
    "gap",
    "vg_count_density",
    "eta",
];

/// Recovery energy against `F₀(u)` along the `ε` grid; the `gap` column is the
/// replica average of `|total − F₀|/F₀`.
pub fn gamma_gap_study(config: &StudyConfig) -> Result<StudyReport> {
    let model = config.capacity_model()?;
    let target = f0_target(config, &model)?;
    let rule = ShellRule::new(config.dim(), config.shell);
    let samples = run_replicas(config, |real, d| {
        let cls = crate::classify::classify(d, real, &config.classify)?;
        let rec = build_recovery(d, &cls, &config.bump, &model, &rule, config.cell_nodes)?;
        let e = evaluate_energy(&rec, d, &cls, &model, config.shell, target)?;
        Ok(vec![
            e.total,
            e.bulk,
            e.capacitary,
            e.mismatch,
            e.bad_region,
            e.corrections,
            e.total,
            e.gap,
            d.eps.powi(d.n as i32) * cls.vg.len() as f64,
            e.eta,
        ])
    })?;
    Ok(StudyReport::assemble(
        StudyKind::Gamma,
        config,
        GAMMA_COLUMNS.iter().map(|s| s.to_string()).collect(),
        samples,
        vec![target; config.eps_grid.len()],
    ))
}
