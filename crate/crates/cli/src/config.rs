//! Declarative run configuration read from TOML.

use std::path::Path;

use perforate::capacity::{CapacityModel, Integrand, DEFAULT_NODES};
use perforate::classify::ClassifyParams;
use perforate::field::Bump;
use perforate::geometry::DomainDescriptor;
use perforate::homogenized::GridSpec;
use perforate::process::{Correlation, MarkLaw, ProcessConfig};
use perforate::quadrature::ShellResolution;
use perforate::slln::StudyConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSection,
    pub domain: DomainDescriptor,
    pub scaling: ScalingSection,
    #[serde(default)]
    pub classify: ClassifyParams,
    #[serde(default)]
    pub capacity: CapacitySection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub intensity: f64,
    pub mark_law: MarkLaw,
    #[serde(default = "independent")]
    pub correlation: Correlation,
    #[serde(default)]
    pub seed: u64,
}

fn independent() -> Correlation {
    Correlation::Independent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub q: f64,
    #[serde(default = "eps_grid")]
    pub eps_grid: Vec<f64>,
}

fn eps_grid() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacitySection {
    pub integrand: Integrand,
    /// Radial segments for cell problems inside studies.
    pub cell_nodes: usize,
    /// Radial segments for `capacity-table`.
    pub nodes: usize,
    pub rhos: Vec<f64>,
    /// Outer radii `R = θK`; `inf` selects the whole-space problem.
    pub outers: Vec<f64>,
    pub zs: Vec<f64>,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self {
            integrand: Integrand::Model,
            cell_nodes: 400,
            nodes: DEFAULT_NODES,
            rhos: vec![1.0],
            outers: vec![f64::INFINITY],
            zs: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub replicas: usize,
    /// Test field; `None` is a centred bump of width 0.3 and amplitude 1.
    pub bump: Option<Bump>,
    /// Exponent of the mark sum; `None` means `n − q`.
    pub mark_power: Option<f64>,
    pub shell: ShellResolution,
    /// Interior nodes per axis for `homogenize`.
    pub grid_nodes: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            replicas: 10,
            bump: None,
            mark_power: None,
            shell: ShellResolution { radial: 8, angular: 16 },
            grid_nodes: 32,
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eps_grid: Option<Vec<f64>>,
    pub replicas: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.process.seed = s;
        }
        if let Some(g) = &o.eps_grid {
            self.scaling.eps_grid = g.clone();
        }
        if let Some(r) = o.replicas {
            self.study.replicas = r;
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn bump(&self) -> Bump {
        self.study.bump.clone().unwrap_or_else(|| Bump::centred(self.dim(), 0.3, 1.0))
    }

    pub fn smallest_eps(&self) -> Result<f64, CliError> {
        self.scaling
            .eps_grid
            .iter()
            .copied()
            .reduce(f64::min)
            .ok_or_else(|| CliError::Config("scaling.eps_grid is empty".into()))
    }

    /// Process on the blown-up domain `ε⁻¹D` at the smallest `ε`.
    pub fn process_config(&self) -> Result<ProcessConfig, CliError> {
        self.domain.validate()?;
        let eps = self.smallest_eps()?;
        if eps.is_nan() || eps <= 0.0 {
            return Err(CliError::Config(format!("eps must be positive, got {eps}")));
        }
        let c = ProcessConfig {
            intensity: self.process.intensity,
            window: self.domain.blown_up_window(eps),
            mark_law: self.process.mark_law.clone(),
            correlation: self.process.correlation.clone(),
            seed: self.process.seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn capacity_model(&self) -> Result<CapacityModel, CliError> {
        Ok(CapacityModel::new(self.dim(), self.scaling.q, self.capacity.integrand)?)
    }

    pub fn study_config(&self) -> Result<StudyConfig, CliError> {
        let c = StudyConfig {
            intensity: self.process.intensity,
            mark_law: self.process.mark_law.clone(),
            correlation: self.process.correlation.clone(),
            domain: self.domain.clone(),
            q: self.scaling.q,
            eps_grid: self.scaling.eps_grid.clone(),
            replicas: self.study.replicas,
            classify: self.classify.clone(),
            bump: self.bump(),
            integrand: self.capacity.integrand,
            mark_power: self.study.mark_power,
            shell: self.study.shell,
            cell_nodes: self.capacity.cell_nodes,
            seed: self.process.seed,
        };
        c.validate()?;
        Ok(c)
    }

    /// Grid over the box domain for the homogenized problem.
    pub fn grid(&self) -> Result<GridSpec, CliError> {
        use perforate::geometry::Shape;
        let half_width = match &self.domain.shape {
            Shape::Box { half_widths } if half_widths.windows(2).all(|w| w[0] == w[1]) => half_widths[0],
            _ => return Err(CliError::Config("homogenize needs a cubic box domain".into())),
        };
        Ok(GridSpec {
            dim: self.dim(),
            n: self.study.grid_nodes,
            half_width,
        })
    }
}
