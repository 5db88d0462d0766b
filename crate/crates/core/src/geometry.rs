//! Perforated domains at the critical scale and annulus averages.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::process::{ProcessRealization, Window};
use crate::quadrature::ShellRule;
use crate::spatial::CellIndex;

/// Check `1 < q < n`.
pub fn check_exponents(n: usize, q: f64) -> Result<()> {
    if !(q > 1.0 && q < n as f64) {
        return invalid(format!("growth exponent must satisfy 1 < q < n, got n={n}, q={q}"));
    }
    Ok(())
}

/// `(α_ε, K) = (ε^{n/(n−q)}, ε^{−q/(n−q)})`.
pub fn critical_scale(eps: f64, n: usize, q: f64) -> Result<(f64, f64)> {
    check_exponents(n, q)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("scale must be positive, got {eps}"));
    }
    let nf = n as f64;
    let alpha = eps.powf(nf / (nf - q));
    let k = eps.powf(-q / (nf - q));
    Ok((alpha, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { half_widths: Vec<f64> },
    Ball { radius: f64 },
}

/// A box or ball centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDescriptor {
    pub dim: usize,
    pub shape: Shape,
}

impl DomainDescriptor {
    pub fn unit_cube(dim: usize) -> Self {
        Self {
            dim,
            shape: Shape::Box {
                half_widths: vec![0.5; dim],
            },
        }
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Self {
            dim,
            shape: Shape::Ball { radius },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return invalid("domain dimension must be positive");
        }
        match &self.shape {
            Shape::Box { half_widths } => {
                if half_widths.len() != self.dim {
                    return invalid("box half widths must match the dimension");
                }
                if half_widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                    return invalid("box half widths must be positive and finite");
                }
            }
            Shape::Ball { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return invalid("ball radius must be positive and finite");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Box { half_widths } => x.iter().zip(half_widths).all(|(v, h)| v.abs() <= *h),
            Shape::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>() <= radius * radius,
        }
    }

    /// Distance from an interior point to the boundary (0 outside).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match &self.shape {
            Shape::Box { half_widths } => x
                .iter()
                .zip(half_widths)
                .map(|(v, h)| h - v.abs())
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius } => radius - x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Box { half_widths } => half_widths.iter().map(|h| 2.0 * h).product(),
            Shape::Ball { radius } => crate::quadrature::ball_volume(self.dim) * radius.powi(self.dim as i32),
        }
    }

    /// Largest coordinate half-extent.
    pub fn half_extent(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Box { half_widths } => half_widths.clone(),
            Shape::Ball { radius } => vec![*radius; self.dim],
        }
    }

    /// Bounding box of `ε⁻¹D`.
    pub fn blown_up_window(&self, eps: f64) -> Window {
        let h: Vec<f64> = self.half_extent().iter().map(|v| v / eps).collect();
        Window {
            lower: h.iter().map(|v| -v).collect(),
            upper: h,
        }
    }
}

/// The holes `B̄_{α_ε ρ_i}(ε x_i)` for `x_i ∈ ε⁻¹D`, stored in physical coordinates.
#[derive(Debug, Clone)]
pub struct PerforatedDomain {
    pub eps: f64,
    pub n: usize,
    pub q: f64,
    pub alpha: f64,
    pub k: f64,
    pub domain: DomainDescriptor,
    /// Flat hole centres `ε x_i`.
    pub centres: Vec<f64>,
    pub radii: Vec<f64>,
    /// Marks `ρ_i` of the holes.
    pub marks: Vec<f64>,
    /// Index of each hole in the source realization.
    pub source: Vec<usize>,
    index: CellIndex,
}

impl PerforatedDomain {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn centre(&self, h: usize) -> &[f64] {
        &self.centres[h * self.n..(h + 1) * self.n]
    }

    pub fn index(&self) -> &CellIndex {
        &self.index
    }

    /// Holes whose centres lie within `radius` of `centre`, sorted.
    pub fn query_neighbors(&self, centre: &[f64], radius: f64) -> Vec<usize> {
        if self.is_empty() || radius < 0.0 {
            return Vec::new();
        }
        self.index.within(centre, radius)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# schema=holes/v1 dim={} eps={:e} alpha={:e}",
            self.n, self.eps, self.alpha
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n).map(|d| format!("c{d}")).collect();
        header.push("radius".into());
        header.push("source".into());
        w.write_record(&header)?;
        for h in 0..self.len() {
            let mut row: Vec<String> = self.centre(h).iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{:.17e}", self.radii[h]));
            row.push(self.source[h].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_perforated_domain(
    realization: &ProcessRealization,
    eps: f64,
    q: f64,
    domain: &DomainDescriptor,
) -> Result<PerforatedDomain> {
    domain.validate()?;
    let n = domain.dim;
    if realization.dim() != n {
        return invalid("realization and domain dimensions differ");
    }
    let (alpha, k) = critical_scale(eps, n, q)?;
    if !realization.config.window.covers(&domain.blown_up_window(eps)) {
        return invalid(format!("process window does not cover the blown-up domain at eps={eps}"));
    }
    if !realization.has_marks() {
        return invalid("realization has no marks");
    }
    let mut centres = Vec::new();
    let mut radii = Vec::new();
    let mut marks = Vec::new();
    let mut source = Vec::new();
    let mut c = vec![0.0; n];
    for i in 0..realization.len() {
        for (d, v) in realization.point(i).iter().enumerate() {
            c[d] = eps * v;
        }
        if domain.contains(&c) {
            centres.extend_from_slice(&c);
            radii.push(alpha * realization.marks[i]);
            marks.push(realization.marks[i]);
            source.push(i);
        }
    }
    let index = CellIndex::new(centres.clone(), n, 0.5 * eps);
    Ok(PerforatedDomain {
        eps,
        n,
        q,
        alpha,
        k,
        domain: domain.clone(),
        centres,
        radii,
        marks,
        source,
        index,
    })
}

/// Dyadic annulus `2^{−(l+1)}θε/M < |x − c| < 2^{−l}θε/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub centre: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
    pub level: u32,
}

impl Annulus {
    pub fn dyadic(centre: &[f64], theta: f64, eps: f64, m: f64, level: u32) -> Result<Self> {
        if !(theta > 0.0 && eps > 0.0 && m > 0.0) {
            return invalid("annulus parameters must be positive");
        }
        let outer = theta * eps / m / 2f64.powi(level as i32);
        Ok(Self {
            centre: centre.to_vec(),
            inner: 0.5 * outer,
            outer,
            level,
        })
    }

    pub fn new(centre: &[f64], inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return invalid(format!("annulus needs 0 <= inner < outer, got ({inner}, {outer})"));
        }
        Ok(Self {
            centre: centre.to_vec(),
            inner,
            outer,
            level: 0,
        })
    }
}

pub fn annulus_average(u: impl Fn(&[f64]) -> f64, annulus: &Annulus, rule: &ShellRule) -> f64 {
    rule.average(&annulus.centre, annulus.inner, annulus.outer, u)
}
