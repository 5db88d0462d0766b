//! Good/bad decomposition of the holes and the separated subsets used by the
//! capacitary sums and the recovery construction.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::PerforatedDomain;
use crate::process::ProcessRealization;
use crate::spatial::{dist2, CellIndex};

/// Parameters of the decomposition. `alpha_exponent = None` means `q/(2(n−q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    pub m: f64,
    pub theta: f64,
    #[serde(default)]
    pub alpha_exponent: Option<f64>,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            m: 10.0,
            theta: 1.0 / 30.0,
            alpha_exponent: None,
        }
    }
}

impl ClassifyParams {
    pub fn exponent(&self, n: usize, q: f64) -> f64 {
        self.alpha_exponent.unwrap_or(default_alpha_exponent(n, q))
    }

    pub fn validate(&self, n: usize, q: f64) -> Result<()> {
        if !(self.m >= 1.0 && self.m.fract() == 0.0) {
            return invalid(format!("M must be a positive integer, got {}", self.m));
        }
        let a = self.exponent(n, q);
        let upper = q / (n as f64 - q);
        if !(a > 0.0 && a < upper) {
            return invalid(format!("alpha exponent must lie in (0, {upper}), got {a}"));
        }
        check_theta(self.theta, self.m)
    }
}

pub fn default_alpha_exponent(n: usize, q: f64) -> f64 {
    q / (2.0 * (n as f64 - q))
}

fn check_theta(theta: f64, m: f64) -> Result<()> {
    let upper = 3.0 / (8.0 * m);
    if !(theta > 0.0 && theta < upper) {
        return invalid(format!("theta must lie in (0, 3/(8M)) = (0, {upper}), got {theta}"));
    }
    Ok(())
}

/// `r_ε = (α_ε max ρ)^{1/n} ∨ ε^{a/4}`; the first branch is absent without marks.
pub fn critical_radius_from(max_mark: Option<f64>, eps: f64, n: usize, q: f64, alpha_exponent: f64) -> Result<f64> {
    let upper = q / (n as f64 - q);
    if !(alpha_exponent > 0.0 && alpha_exponent < upper) {
        return invalid(format!("alpha exponent must lie in (0, {upper}), got {alpha_exponent}"));
    }
    let (alpha, _) = crate::geometry::critical_scale(eps, n, q)?;
    let floor = eps.powf(alpha_exponent / 4.0);
    Ok(match max_mark {
        Some(m) => (alpha * m).powf(1.0 / n as f64).max(floor),
        None => floor,
    })
}

/// Critical radius over the holes of a perforated domain.
pub fn critical_radius(domain: &PerforatedDomain, alpha_exponent: f64) -> Result<f64> {
    let max_mark = domain.marks.iter().copied().reduce(f64::max);
    critical_radius_from(max_mark, domain.eps, domain.n, domain.q, alpha_exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleClass {
    Bad,
    Good,
}

/// Index sets refer to hole indices of the [`PerforatedDomain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleClassification {
    pub r_eps: f64,
    pub class: Vec<HoleClass>,
    pub bad: Vec<usize>,
    pub good: Vec<usize>,
    /// `d_{ε,i}` for every hole.
    pub d: Vec<f64>,
    /// Distance from each centre to the safety layer, `∞` when there is no bad hole nearby.
    pub safety_distance: Vec<f64>,
    /// Blown-up nearest-neighbour distance over the whole realization, `∞` beyond 2.
    pub nearest: Vec<f64>,
    pub gm: Vec<usize>,
    pub mg: Vec<usize>,
    pub vg: Vec<usize>,
    pub m: Option<f64>,
    pub theta: Option<f64>,
}

const NEAREST_CAP: f64 = 2.0;
const NEAREST_PROBE: f64 = 0.5;

/// Bad/good partition with the safety-layer fixpoint, followed by `d_{ε,i}`.
///
/// 1. holes with `α_ε ρ_i > ε r_ε/2` are bad;
/// 2. both members of any pair of remaining holes closer than `2r_ε` (blown-up) are bad;
/// 3. a good hole whose ball lies closer than `ε r_ε/2` to some `B̄_{2α_ε ρ_b}(ε x_b)`
///    with `b` bad becomes bad, repeated until nothing changes.
pub fn classify_holes(domain: &PerforatedDomain, realization: &ProcessRealization, r_eps: f64) -> Result<HoleClassification> {
    if !(r_eps > 0.0) {
        return invalid("critical radius must be positive");
    }
    let n_holes = domain.len();
    let eps = domain.eps;
    let margin = 0.5 * eps * r_eps;
    let sep = 2.0 * eps * r_eps;

    let mut bad: Vec<bool> = domain.radii.iter().map(|&r| r > margin).collect();
    let close_pair: Vec<bool> = (0..n_holes)
        .into_par_iter()
        .map(|h| {
            if bad[h] {
                return false;
            }
            domain
                .index()
                .any_within(domain.centre(h), sep, |k, d2| k != h && !bad[k] && d2 < sep * sep)
        })
        .collect();
    for (b, c) in bad.iter_mut().zip(&close_pair) {
        *b |= *c;
    }

    let mut work: Vec<usize> = (0..n_holes).filter(|&h| bad[h]).collect();
    let mut rounds = 0usize;
    while let Some(b) = work.pop() {
        rounds += 1;
        if rounds > n_holes {
            return Err(Error::Invariant("safety-layer iteration exceeded the hole count".into()));
        }
        let reach = 2.0 * margin + 2.0 * domain.radii[b];
        let cb = domain.centre(b);
        for g in domain.query_neighbors(cb, reach) {
            if !bad[g] && layer_gap(domain, g, b) < margin {
                bad[g] = true;
                work.push(g);
            }
        }
    }

    let class: Vec<HoleClass> = bad.iter().map(|&b| if b { HoleClass::Bad } else { HoleClass::Good }).collect();
    let bad_idx: Vec<usize> = (0..n_holes).filter(|&h| bad[h]).collect();
    let good_idx: Vec<usize> = (0..n_holes).filter(|&h| !bad[h]).collect();

    let max_bad_radius = bad_idx.iter().map(|&b| domain.radii[b]).fold(0.0, f64::max);
    let safety_distance: Vec<f64> = (0..n_holes)
        .into_par_iter()
        .map(|h| {
            if bad[h] {
                return 0.0;
            }
            let c = domain.centre(h);
            let mut best = f64::INFINITY;
            domain.index().for_each_within(c, eps + 2.0 * max_bad_radius, |k, d2| {
                if bad[k] {
                    best = best.min((d2.sqrt() - 2.0 * domain.radii[k]).max(0.0));
                }
            });
            best
        })
        .collect();

    let blown = CellIndex::new(realization.points.clone(), realization.dim(), NEAREST_PROBE);
    let nearest: Vec<f64> = domain
        .source
        .par_iter()
        .map(|&s| {
            let near = blown.nearest_other_within(s, NEAREST_PROBE);
            if near.is_finite() {
                near
            } else {
                blown.nearest_other_within(s, NEAREST_CAP)
            }
        })
        .collect();
    let d = (0..n_holes)
        .map(|h| safety_distance[h].min(0.5 * eps * nearest[h]).min(eps))
        .collect();

    let cls = HoleClassification {
        r_eps,
        class,
        bad: bad_idx,
        good: good_idx,
        d,
        safety_distance,
        nearest,
        gm: Vec::new(),
        mg: Vec::new(),
        vg: Vec::new(),
        m: None,
        theta: None,
    };
    check_partition_invariants(&cls, domain)?;
    Ok(cls)
}

/// Distance between the closed ball of hole `g` and the safety envelope of hole `b`.
fn layer_gap(domain: &PerforatedDomain, g: usize, b: usize) -> f64 {
    dist2(domain.centre(g), domain.centre(b)).sqrt() - domain.radii[g] - 2.0 * domain.radii[b]
}

/// Good holes with `d_{ε,i} ≥ ε/M`, `ρ_i ≤ M`, and `B_{ε/M}(ε x_i) ⊂ D`.
pub fn select_gm(cls: &HoleClassification, domain: &PerforatedDomain, m: f64) -> Vec<usize> {
    let r = domain.eps / m;
    cls.good
        .iter()
        .copied()
        .filter(|&h| cls.d[h] >= r && domain.marks[h] <= m && domain.domain.boundary_distance(domain.centre(h)) >= r)
        .collect()
}

/// `(VG, MG)`: a `G_M` centre is mildly good when the sphere `∂B_{θε}(ε x_i)`
/// meets `B̄_{ε r_ε}(ε x_k)` for another good `x_k`; every good centre outside
/// `G_M` is mildly good as well.
pub fn split_vg_mg(
    cls: &HoleClassification,
    gm: &[usize],
    domain: &PerforatedDomain,
    theta: f64,
    m: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_theta(theta, m)?;
    let eps = domain.eps;
    let lo = theta * eps - eps * cls.r_eps;
    let hi = theta * eps + eps * cls.r_eps;
    let touched: Vec<bool> = gm
        .par_iter()
        .map(|&i| {
            let mut hit = false;
            domain.index().for_each_within(domain.centre(i), hi, |k, d2| {
                if k != i && cls.class[k] == HoleClass::Good {
                    let d = d2.sqrt();
                    if d >= lo && d <= hi {
                        hit = true;
                    }
                }
            });
            hit
        })
        .collect();
    let mut in_gm = vec![false; domain.len()];
    for &i in gm {
        in_gm[i] = true;
    }
    let vg: Vec<usize> = gm.iter().zip(&touched).filter(|(_, t)| !**t).map(|(i, _)| *i).collect();
    let mut mg: Vec<usize> = cls.good.iter().copied().filter(|&h| !in_gm[h]).collect();
    mg.extend(gm.iter().zip(&touched).filter(|(_, t)| **t).map(|(i, _)| *i));
    mg.sort_unstable();
    Ok((vg, mg))
}

/// Full decomposition: `r_ε`, bad/good, `G_M`, VG and MG, with every invariant checked.
pub fn classify(domain: &PerforatedDomain, realization: &ProcessRealization, params: &ClassifyParams) -> Result<HoleClassification> {
    params.validate(domain.n, domain.q)?;
    let r_eps = critical_radius(domain, params.exponent(domain.n, domain.q))?;
    let mut cls = classify_holes(domain, realization, r_eps)?;
    cls.gm = select_gm(&cls, domain, params.m);
    let (vg, mg) = split_vg_mg(&cls, &cls.gm, domain, params.theta, params.m)?;
    cls.vg = vg;
    cls.mg = mg;
    cls.m = Some(params.m);
    cls.theta = Some(params.theta);
    check_invariants(&cls, domain)?;
    Ok(cls)
}

fn violation<T>(msg: String) -> Result<T> {
    Err(Error::Invariant(msg))
}

/// Partition, separation, radius bound and safety-layer distance.
pub fn check_partition_invariants(cls: &HoleClassification, domain: &PerforatedDomain) -> Result<()> {
    let eps = domain.eps;
    let margin = 0.5 * eps * cls.r_eps;
    let sep = 2.0 * eps * cls.r_eps;
    if cls.bad.len() + cls.good.len() != domain.len() {
        return violation("bad and good do not partition the holes".into());
    }
    let mut seen = vec![false; domain.len()];
    for &h in cls.bad.iter().chain(&cls.good) {
        if seen[h] {
            return violation(format!("hole {h} is both bad and good"));
        }
        seen[h] = true;
    }
    for &g in &cls.good {
        if domain.radii[g] > margin {
            return violation(format!("good hole {g} has radius {} > {margin}", domain.radii[g]));
        }
        let mut err = None;
        domain.index().for_each_within(domain.centre(g), sep, |k, d2| {
            if k != g && cls.class[k] == HoleClass::Good && d2 < sep * sep {
                err = Some(format!("good holes {g} and {k} closer than 2 r_eps"));
            }
        });
        if let Some(e) = err {
            return violation(e);
        }
    }
    let max_bad = cls.bad.iter().map(|&b| domain.radii[b]).fold(0.0, f64::max);
    for &g in &cls.good {
        for k in domain.query_neighbors(domain.centre(g), 2.0 * margin + 2.0 * max_bad) {
            if cls.class[k] == HoleClass::Bad && layer_gap(domain, g, k) < margin {
                return violation(format!("good hole {g} within eps r_eps / 2 of the safety layer of {k}"));
            }
        }
    }
    Ok(())
}

/// Partition invariants plus `G_M ⊆ good`, `G_M ⊆ Φ^{2/M}`, disjoint balls
/// `B_{ε/M}` inside D, and `VG = G_M ∖ MG` with `VG ∪ MG = good`.
pub fn check_invariants(cls: &HoleClassification, domain: &PerforatedDomain) -> Result<()> {
    check_partition_invariants(cls, domain)?;
    let Some(m) = cls.m else {
        return Ok(());
    };
    let eps = domain.eps;
    let r = eps / m;
    for &i in &cls.gm {
        if cls.class[i] != HoleClass::Good {
            return violation(format!("G_M centre {i} is not good"));
        }
        if cls.nearest[i] < 2.0 / m {
            return violation(format!("G_M centre {i} is not 2/M-isolated"));
        }
        if domain.domain.boundary_distance(domain.centre(i)) < r {
            return violation(format!("ball around G_M centre {i} leaves the domain"));
        }
        for k in domain.query_neighbors(domain.centre(i), 2.0 * r) {
            if k != i && dist2(domain.centre(i), domain.centre(k)) < 4.0 * r * r && cls.gm.binary_search(&k).is_ok() {
                return violation(format!("balls around G_M centres {i} and {k} overlap"));
            }
        }
    }
    let mut vg_mg: Vec<usize> = cls.vg.iter().chain(&cls.mg).copied().collect();
    vg_mg.sort_unstable();
    let len = vg_mg.len();
    vg_mg.dedup();
    if vg_mg.len() != len {
        return violation("VG and MG intersect".into());
    }
    if vg_mg != cls.good {
        return violation("VG and MG do not cover the good centres".into());
    }
    if cls.vg.iter().any(|i| cls.gm.binary_search(i).is_err()) {
        return violation("VG is not contained in G_M".into());
    }
    Ok(())
}

/// `ε^n Σ_{bad} ρ_i^{n−q}`.
pub fn bad_capacity_sum(cls: &HoleClassification, domain: &PerforatedDomain) -> f64 {
    let p = domain.n as f64 - domain.q;
    domain.eps.powi(domain.n as i32) * cls.bad.iter().map(|&b| domain.marks[b].powf(p)).sum::<f64>()
}

/// `ε^n #{x_i ∈ Φ^{2δ} : dist(ε x_i, D_b) ≤ δ ε}` over the holes.
pub fn near_safety_layer_density(cls: &HoleClassification, domain: &PerforatedDomain, delta: f64) -> f64 {
    let count = (0..domain.len())
        .filter(|&h| cls.nearest[h] >= 2.0 * delta && cls.safety_distance[h] <= delta * domain.eps)
        .count();
    domain.eps.powi(domain.n as i32) * count as f64
}

impl HoleClassification {
    /// Finest label of each hole: `bad`, `good` (outside G_M), `GM` (in G_M and
    /// mildly good) or `VG`.
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = self
            .class
            .iter()
            .map(|c| if *c == HoleClass::Bad { "bad" } else { "good" })
            .collect();
        for &i in &self.gm {
            out[i] = "GM";
        }
        for &i in &self.vg {
            out[i] = "VG";
        }
        out
    }

    pub fn write_csv<W: Write>(&self, domain: &PerforatedDomain, mut out: W) -> Result<()> {
        writeln!(out, "# schema=classification/v1 eps={:e} r_eps={:.17e}", domain.eps, self.r_eps)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "class", "rho", "d"])?;
        for (h, label) in self.labels().into_iter().enumerate() {
            w.write_record([
                h.to_string(),
                label.to_string(),
                format!("{:.17e}", domain.marks[h]),
                format!("{:.17e}", self.d[h]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
