//! Stationary marked point processes on boxes and their δ-thinnings.

mod field;
mod marks;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use field::{latent_covariance, SpectralField, DEFAULT_FEATURES};
pub use marks::{mark_moments, MarkLaw, MarkLawMoments};

use crate::error::{invalid, Result};
use crate::rng::{stage, stream};
use crate::spatial::CellIndex;

/// Axis-aligned box `[lower, upper]` in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let w = Self { lower, upper };
        w.validate()?;
        Ok(w)
    }

    /// The cube `[-half, half]ⁿ`.
    pub fn centred_cube(dim: usize, half: f64) -> Self {
        Self {
            lower: vec![-half; dim],
            upper: vec![half; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// `self ⊇ other`.
    pub fn covers(&self, other: &Window) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a <= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a >= b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return invalid("window bounds must be non-empty and of equal dimension");
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return invalid("window must have positive, finite extent on every axis");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Correlation {
    Independent,
    GaussianCopula { gamma_decay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub intensity: f64,
    pub window: Window,
    pub mark_law: MarkLaw,
    #[serde(default = "default_correlation")]
    pub correlation: Correlation,
    #[serde(default)]
    pub seed: u64,
}

fn default_correlation() -> Correlation {
    Correlation::Independent
}

impl ProcessConfig {
    /// `intensity == 0` is accepted as the empty process.
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return invalid(format!("intensity must be non-negative and finite, got {}", self.intensity));
        }
        self.window.validate()?;
        self.mark_law.validate()?;
        if let Correlation::GaussianCopula { gamma_decay } = self.correlation {
            let n = self.window.dim() as f64;
            if !(gamma_decay > n) {
                return invalid(format!(
                    "copula decay exponent must exceed the dimension {n} for strong mixing, got {gamma_decay}"
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Points in blown-up coordinates with their radius marks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessRealization {
    dim: usize,
    /// Flat coordinates, `dim` per point.
    pub points: Vec<f64>,
    /// Empty until [`sample_marks`] has run.
    pub marks: Vec<f64>,
    pub config: ProcessConfig,
    pub seed: u64,
}

impl ProcessRealization {
    /// A realization with explicitly given points and marks.
    pub fn from_parts(config: ProcessConfig, points: Vec<f64>, marks: Vec<f64>) -> Result<Self> {
        let dim = config.dim();
        if !points.len().is_multiple_of(dim) {
            return invalid("point coordinates are not a multiple of the dimension");
        }
        if !marks.is_empty() && marks.len() * dim != points.len() {
            return invalid("points and marks differ in length");
        }
        if marks.iter().any(|m| !(*m > 0.0)) {
            return invalid("marks must be strictly positive");
        }
        let seed = config.seed;
        let r = Self {
            dim,
            points,
            marks,
            config,
            seed,
        };
        if !(0..r.len()).all(|i| r.config.window.contains(r.point(i))) {
            return invalid("points must lie inside the window");
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn has_marks(&self) -> bool {
        self.marks.len() == self.len()
    }

    pub fn spatial_index(&self, cell: f64) -> CellIndex {
        CellIndex::new(self.points.clone(), self.dim, cell)
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        let mut points = Vec::with_capacity(keep.len() * self.dim);
        for &i in keep {
            points.extend_from_slice(self.point(i));
        }
        let marks = if self.marks.len() == self.len() && !self.marks.is_empty() {
            keep.iter().map(|&i| self.marks[i]).collect()
        } else {
            Vec::new()
        };
        Self {
            dim: self.dim,
            points,
            marks,
            config: self.config.clone(),
            seed: self.seed,
        }
    }

    /// Flat CSV `x1..xn,rho` with a schema comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=realization/v1 dim={} seed={}", self.dim, self.seed)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|d| format!("x{d}")).collect();
        header.push("rho".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:.17e}")).collect();
            row.push(self.marks.get(i).map(|m| format!("{m:.17e}")).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Homogeneous Poisson points: `Poisson(λ·vol)` count, then uniform placement.
pub fn sample_points(config: &ProcessConfig) -> Result<ProcessRealization> {
    config.validate()?;
    let dim = config.dim();
    let mut rng = stream(config.seed, &[stage::POINTS]);
    let mean = config.intensity * config.window.volume();
    let count = if mean > 0.0 {
        let p = Poisson::new(mean).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
        p.sample(&mut rng) as usize
    } else {
        0
    };
    let mut points = Vec::with_capacity(count * dim);
    for _ in 0..count {
        for d in 0..dim {
            let (a, b) = (config.window.lower[d], config.window.upper[d]);
            points.push(a + (b - a) * rng.random::<f64>());
        }
    }
    Ok(ProcessRealization {
        dim,
        points,
        marks: Vec::new(),
        config: config.clone(),
        seed: config.seed,
    })
}

/// Attach marks drawn from the configured law.
pub fn sample_marks(realization: ProcessRealization) -> Result<ProcessRealization> {
    let config = &realization.config;
    config.validate()?;
    let law = &config.mark_law;
    let mut rng = stream(realization.seed, &[stage::MARKS]);
    let marks = match config.correlation {
        Correlation::Independent => (0..realization.len()).map(|_| law.quantile(rng.random::<f64>())).collect(),
        Correlation::GaussianCopula { gamma_decay } => {
            let mut frng = stream(realization.seed, &[stage::FIELD]);
            let field = SpectralField::sample(realization.dim, gamma_decay, DEFAULT_FEATURES, &mut frng);
            (0..realization.len())
                .into_par_iter()
                .map(|i| {
                    let z = field.value(realization.point(i));
                    law.quantile(0.5 * erfc(-z / std::f64::consts::SQRT_2))
                })
                .collect()
        }
    };
    Ok(ProcessRealization { marks, ..realization })
}

/// Points and marks in one call.
pub fn generate(config: &ProcessConfig) -> Result<ProcessRealization> {
    sample_marks(sample_points(config)?)
}

/// Indices of points whose nearest other point lies at distance `>= delta`.
pub fn thin_indices(realization: &ProcessRealization, delta: f64) -> Vec<usize> {
    if delta <= 0.0 || realization.is_empty() {
        return (0..realization.len()).collect();
    }
    let index = realization.spatial_index(delta);
    (0..realization.len())
        .into_par_iter()
        .filter(|&i| {
            let mut isolated = true;
            index.for_each_within(realization.point(i), delta, |j, d2| {
                if j != i && d2 < delta * delta {
                    isolated = false;
                }
            });
            isolated
        })
        .collect()
}

/// The δ-isolated sub-process `Φ^δ`.
pub fn thin(realization: &ProcessRealization, delta: f64) -> ProcessRealization {
    realization.subset(&thin_indices(realization, delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64, half: f64, law: MarkLaw, seed: u64) -> ProcessConfig {
        ProcessConfig {
            intensity: lambda,
            window: Window::centred_cube(3, half),
            mark_law: law,
            correlation: Correlation::Independent,
            seed,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(sample_points(&cfg(-1.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 0)).is_err());
        let mut c = cfg(1.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 0);
        c.window.upper[1] = c.window.lower[1];
        assert!(sample_points(&c).is_err());
        let mut c = cfg(1.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 0);
        c.correlation = Correlation::GaussianCopula { gamma_decay: 3.0 };
        assert!(sample_points(&c).is_err());
    }

    #[test]
    fn zero_intensity_is_empty() {
        let r = generate(&cfg(0.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 5)).unwrap();
        assert!(r.is_empty() && r.marks.is_empty());
    }

    #[test]
    fn constant_marks() {
        let r = generate(&cfg(5.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 1)).unwrap();
        assert!(!r.is_empty());
        assert!(r.marks.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn thinning_edge_cases() {
        let c = cfg(1.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 0);
        let r = ProcessRealization::from_parts(c, vec![0.0, 0.0, 0.0, 0.5, 0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(thin(&r, 0.0).len(), 2);
        assert_eq!(thin(&r, 1.0).len(), 0);
        assert_eq!(thin(&r, 0.5).len(), 2);
    }

    #[test]
    fn from_parts_checks_invariants() {
        let c = cfg(1.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 0);
        assert!(ProcessRealization::from_parts(c.clone(), vec![0.0, 0.0, 2.0], vec![1.0]).is_err());
        assert!(ProcessRealization::from_parts(c.clone(), vec![0.0, 0.0, 0.0], vec![-1.0]).is_err());
        assert!(ProcessRealization::from_parts(c, vec![0.0, 0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = generate(&cfg(2.0, 1.0, MarkLaw::Constant { rho0: 1.0 }, 9)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# schema=realization/v1"));
        assert_eq!(lines.next().unwrap(), "x1,x2,x3,rho");
        assert_eq!(lines.count(), r.len());
    }
}
