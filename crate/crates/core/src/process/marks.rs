//! Mark laws for the hole radii and their moments.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc_inv};

use crate::error::{invalid, Error, Result};
use crate::quadrature::adaptive_simpson;

/// Distribution of the radius mark ρ attached to each point.
///
/// `Pareto { rho_min, beta }` has density `(β−1) ρ_min^{β−1} ρ^{−β}` on
/// `[ρ_min, ∞)`, so `⟨ρ^p⟩` exists iff `p < β − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Constant { rho0: f64 },
    Pareto { rho_min: f64, beta: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Truncated { rho_max: f64, inner: Box<MarkLaw> },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkLaw::Constant { rho0 } if !(*rho0 > 0.0 && rho0.is_finite()) => {
                invalid(format!("constant mark must be positive, got {rho0}"))
            }
            MarkLaw::Pareto { rho_min, beta } if !(*rho_min > 0.0 && *beta > 1.0) => {
                invalid(format!("pareto needs rho_min > 0 and beta > 1, got ({rho_min}, {beta})"))
            }
            MarkLaw::Lognormal { mu, sigma } if !(mu.is_finite() && *sigma > 0.0) => {
                invalid(format!("lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})"))
            }
            MarkLaw::Truncated { rho_max, inner } => {
                inner.validate()?;
                if !(*rho_max > 0.0) || inner.cdf(*rho_max) <= 0.0 {
                    return invalid(format!("truncation at {rho_max} leaves no mass"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Reject laws whose `⟨ρ^{n−q}⟩` is infinite.
    pub fn require_capacity_moment(&self, n: usize, q: f64) -> Result<()> {
        self.moment(n as f64 - q).map(|_| ())
    }

    pub fn cdf(&self, rho: f64) -> f64 {
        match self {
            MarkLaw::Constant { rho0 } => {
                if rho >= *rho0 {
                    1.0
                } else {
                    0.0
                }
            }
            MarkLaw::Pareto { rho_min, beta } => {
                if rho <= *rho_min {
                    0.0
                } else {
                    1.0 - (rho_min / rho).powf(beta - 1.0)
                }
            }
            MarkLaw::Lognormal { mu, sigma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    0.5 * (1.0 + erf((rho.ln() - mu) / (sigma * std::f64::consts::SQRT_2)))
                }
            }
            MarkLaw::Truncated { rho_max, inner } => {
                if rho >= *rho_max {
                    1.0
                } else {
                    inner.cdf(rho) / inner.cdf(*rho_max)
                }
            }
        }
    }

    /// Density; zero for the atomic constant law.
    pub fn pdf(&self, rho: f64) -> f64 {
        match self {
            MarkLaw::Constant { .. } => 0.0,
            MarkLaw::Pareto { rho_min, beta } => {
                if rho < *rho_min {
                    0.0
                } else {
                    (beta - 1.0) * rho_min.powf(beta - 1.0) * rho.powf(-beta)
                }
            }
            MarkLaw::Lognormal { mu, sigma } => {
                if rho <= 0.0 {
                    0.0
                } else {
                    let z = (rho.ln() - mu) / sigma;
                    (-0.5 * z * z).exp() / (rho * sigma * (2.0 * std::f64::consts::PI).sqrt())
                }
            }
            MarkLaw::Truncated { rho_max, inner } => {
                if rho > *rho_max {
                    0.0
                } else {
                    inner.pdf(rho) / inner.cdf(*rho_max)
                }
            }
        }
    }

    /// Inverse CDF; `u` is clamped into the open unit interval.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(1e-16, 1.0 - 1e-16);
        match self {
            MarkLaw::Constant { rho0 } => *rho0,
            MarkLaw::Pareto { rho_min, beta } => rho_min * (1.0 - u).powf(-1.0 / (beta - 1.0)),
            MarkLaw::Lognormal { mu, sigma } => {
                let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u);
                (mu + sigma * z).exp()
            }
            MarkLaw::Truncated { rho_max, inner } => inner.quantile(u * inner.cdf(*rho_max)).min(*rho_max),
        }
    }

    /// `⟨ρ^p⟩`. Closed form for the untruncated laws, adaptive quadrature
    /// for truncated ones.
    pub fn moment(&self, p: f64) -> Result<f64> {
        match self {
            MarkLaw::Constant { rho0 } => Ok(rho0.powf(p)),
            MarkLaw::Pareto { rho_min, beta } => {
                if p >= beta - 1.0 {
                    Err(Error::Divergence {
                        law: format!("pareto(rho_min={rho_min}, beta={beta})"),
                        order: p,
                    })
                } else {
                    Ok((beta - 1.0) * rho_min.powf(p) / (beta - 1.0 - p))
                }
            }
            MarkLaw::Lognormal { mu, sigma } => Ok((p * mu + 0.5 * p * p * sigma * sigma).exp()),
            MarkLaw::Truncated { rho_max, inner } => {
                if let MarkLaw::Constant { rho0 } = inner.as_ref() {
                    return Ok(rho0.powf(p));
                }
                let lo = self.quantile(0.0).ln();
                let hi = rho_max.ln();
                if hi <= lo {
                    return Ok(rho_max.powf(p));
                }
                // substitute ρ = e^t
                let f = |t: f64| {
                    let r = t.exp();
                    r.powf(p) * self.pdf(r) * r
                };
                let scale = self.quantile(0.5).powf(p).max(1e-300);
                Ok(adaptive_simpson(&f, lo, hi, 1e-12 * scale))
            }
        }
    }

    /// `⟨(ρ ∧ cap)^p⟩`.
    pub fn clamped_moment(&self, p: f64, cap: f64) -> Result<f64> {
        if !(cap > 0.0) {
            return invalid(format!("clamp level must be positive, got {cap}"));
        }
        let point_mass = match self {
            MarkLaw::Constant { rho0 } => Some(*rho0),
            MarkLaw::Truncated { inner, .. } => match inner.as_ref() {
                MarkLaw::Constant { rho0 } => Some(*rho0),
                _ => None,
            },
            _ => None,
        };
        if let Some(r) = point_mass {
            return Ok(r.min(cap).powf(p));
        }
        let lo = self.effective_lower(1e-14);
        let tail = cap.powf(p) * (1.0 - self.cdf(cap));
        if cap <= lo {
            return Ok(tail);
        }
        let f = |t: f64| {
            let r = t.exp();
            r.powf(p) * self.pdf(r) * r
        };
        let scale = cap.min(self.quantile(0.5)).powf(p).max(1e-300);
        Ok(adaptive_simpson(&f, lo.ln(), cap.ln(), 1e-12 * scale) + tail)
    }

    /// Point beyond which the remaining probability mass is below `tail`.
    pub fn effective_upper(&self, tail: f64) -> f64 {
        match self {
            MarkLaw::Constant { rho0 } => *rho0,
            MarkLaw::Truncated { rho_max, .. } => *rho_max,
            _ => self.quantile(1.0 - tail),
        }
    }

    /// Smallest point of the support (or a quantile deep in the lower tail).
    pub fn effective_lower(&self, tail: f64) -> f64 {
        match self {
            MarkLaw::Constant { rho0 } => *rho0,
            MarkLaw::Pareto { rho_min, .. } => *rho_min,
            MarkLaw::Lognormal { .. } => self.quantile(tail),
            MarkLaw::Truncated { inner, .. } => inner.effective_lower(tail),
        }
    }
}

/// Moments of a mark law at the capacity exponent `n − q`.
#[derive(Debug, Clone)]
pub struct MarkLawMoments {
    law: MarkLaw,
    pub mean_n_minus_q: f64,
}

impl MarkLawMoments {
    pub fn mean_generic(&self, p: f64) -> Result<f64> {
        self.law.moment(p)
    }
}

pub fn mark_moments(law: &MarkLaw, n: usize, q: f64) -> Result<MarkLawMoments> {
    law.validate()?;
    Ok(MarkLawMoments {
        law: law.clone(),
        mean_n_minus_q: law.moment(n as f64 - q)?,
    })
}
