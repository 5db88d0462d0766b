//! Monte Carlo studies of the strong laws of large numbers behind the
//! capacitary term.
//!
//! Each replica draws one realization on a window covering `ε⁻¹D` for the
//! smallest `ε` of the grid and reuses it along the whole grid, so that hole
//! sets are nested in `ε`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capacity::{average_capacity_density, cap_q_annulus, phi_truncated, CapacityModel, Integrand};
use crate::classify::{bad_capacity_sum, classify, near_safety_layer_density, ClassifyParams};
use crate::error::{invalid, Result};
use crate::field::Bump;
use crate::geometry::{annulus_average, build_perforated_domain, critical_scale, Annulus, DomainDescriptor, PerforatedDomain};
use crate::process::{generate, thin_indices, Correlation, MarkLaw, ProcessConfig, ProcessRealization, Window};
use crate::quadrature::{ShellResolution, ShellRule};
use crate::rng::{derive_seed, stage};

/// Blown-up margin added around `ε⁻¹D` so that neighbour searches near the
/// boundary see the surrounding points.
const WINDOW_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub intensity: f64,
    pub mark_law: MarkLaw,
    #[serde(default = "independent")]
    pub correlation: Correlation,
    pub domain: DomainDescriptor,
    pub q: f64,
    pub eps_grid: Vec<f64>,
    pub replicas: usize,
    pub classify: ClassifyParams,
    pub bump: Bump,
    #[serde(default = "model")]
    pub integrand: Integrand,
    /// Exponent of the mark sum; `None` means `n − q`.
    #[serde(default)]
    pub mark_power: Option<f64>,
    #[serde(default = "study_shell")]
    pub shell: ShellResolution,
    /// Radial segments for cell problems of non-model integrands.
    #[serde(default = "cell_nodes")]
    pub cell_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn independent() -> Correlation {
    Correlation::Independent
}

fn model() -> Integrand {
    Integrand::Model
}

fn study_shell() -> ShellResolution {
    ShellResolution { radial: 8, angular: 16 }
}

fn cell_nodes() -> usize {
    400
}

impl StudyConfig {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        crate::geometry::check_exponents(self.dim(), self.q)?;
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return invalid("eps grid must be non-empty and positive");
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return invalid("eps grid must be strictly decreasing");
        }
        if self.replicas == 0 {
            return invalid("at least one replica is required");
        }
        self.classify.validate(self.dim(), self.q)?;
        self.bump.validate(&self.domain)?;
        self.process(0).validate()?;
        CapacityModel::new(self.dim(), self.q, self.integrand)?;
        Ok(())
    }

    pub fn capacity_model(&self) -> Result<CapacityModel> {
        CapacityModel::new(self.dim(), self.q, self.integrand)
    }

    fn smallest_eps(&self) -> f64 {
        *self.eps_grid.last().expect("validated grid")
    }

    /// Process configuration of replica `r`.
    pub fn process(&self, replica: usize) -> ProcessConfig {
        let w = self.domain.blown_up_window(self.smallest_eps());
        let window = Window {
            lower: w.lower.iter().map(|v| v - WINDOW_MARGIN).collect(),
            upper: w.upper.iter().map(|v| v + WINDOW_MARGIN).collect(),
        };
        ProcessConfig {
            intensity: self.intensity,
            window,
            mark_law: self.mark_law.clone(),
            correlation: self.correlation.clone(),
            seed: derive_seed(self.seed, &[stage::REPLICA, replica as u64]),
        }
    }

    pub fn realize(&self, replica: usize) -> Result<ProcessRealization> {
        generate(&self.process(replica))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Counting,
    Marksum,
    Negligible,
    Integral,
    Capsum,
    Gamma,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Counting => "counting",
            StudyKind::Marksum => "marksum",
            StudyKind::Negligible => "negligible",
            StudyKind::Integral => "integral",
            StudyKind::Capsum => "capsum",
            StudyKind::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub replicas: usize,
    pub mean: f64,
    pub std: f64,
    pub target: f64,
    /// `|mean − target|/|target|`, or `|mean|` when the target is zero.
    pub rel_err: f64,
    /// Replica means of the auxiliary columns of the report.
    pub extra: Vec<f64>,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub seed: u64,
    pub eps_grid: Vec<f64>,
    pub extra_columns: Vec<String>,
    pub rows: Vec<StudyRow>,
}

pub fn relative_error(mean: f64, target: f64) -> f64 {
    if target == 0.0 {
        mean.abs()
    } else {
        (mean - target).abs() / target.abs()
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Non-increasing from the largest to the smallest `ε`, allowing `allowed` inversions.
pub fn non_increasing_with_inversions(values: &[f64], allowed: usize) -> bool {
    values.windows(2).filter(|w| w[1] > w[0]).count() <= allowed
}

impl StudyReport {
    pub(crate) fn assemble(
        kind: StudyKind,
        config: &StudyConfig,
        extra_columns: Vec<String>,
        samples: Vec<Vec<Vec<f64>>>,
        targets: Vec<f64>,
    ) -> Self {
        let rows = config
            .eps_grid
            .iter()
            .enumerate()
            .map(|(e, &eps)| {
                let main: Vec<f64> = samples.iter().map(|rep| rep[e][0]).collect();
                let (mean, std) = mean_std(&main);
                let extra = (1..=extra_columns.len())
                    .map(|c| mean_std(&samples.iter().map(|rep| rep[e][c]).collect::<Vec<_>>()).0)
                    .collect();
                StudyRow {
                    eps,
                    replicas: samples.len(),
                    mean,
                    std,
                    target: targets[e],
                    rel_err: relative_error(mean, targets[e]),
                    extra,
                    samples: main,
                }
            })
            .collect();
        Self {
            kind,
            seed: config.seed,
            eps_grid: config.eps_grid.clone(),
            extra_columns,
            rows,
        }
    }

    /// Relative errors ordered from the largest to the smallest `ε`.
    pub fn rel_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_err).collect()
    }

    pub fn worst_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_err).fold(0.0, f64::max)
    }

    /// The error-decay property with one allowed inversion.
    pub fn error_decays(&self) -> bool {
        non_increasing_with_inversions(&self.rel_errors(), 1)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.extra_columns.iter().position(|x| x == name)?;
        Some(self.rows.iter().map(|r| r.extra[c]).collect())
    }

    pub fn file_stem(&self) -> String {
        let grid: Vec<String> = self.eps_grid.iter().map(|e| format!("{e}")).collect();
        format!("{}_seed{}_eps{}", self.kind.name(), self.seed, grid.join("-"))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=study/v1 kind={} seed={}", self.kind.name(), self.seed)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["eps", "replicas", "mean", "std", "target", "rel_err"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.extra_columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                format!("{}", r.eps),
                r.replicas.to_string(),
                format!("{:.17e}", r.mean),
                format!("{:.17e}", r.std),
                format!("{:.17e}", r.target),
                format!("{:.17e}", r.rel_err),
            ];
            rec.extend(r.extra.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Run `per_eps` on every `(replica, ε)` and collect the rows of values.
/// Replicas are processed in index order so the reduction is deterministic.
pub(crate) fn run_replicas(
    config: &StudyConfig,
    per_eps: impl Fn(&ProcessRealization, &PerforatedDomain) -> Result<Vec<f64>> + Sync,
) -> Result<Vec<Vec<Vec<f64>>>> {
    config.validate()?;
    (0..config.replicas)
        .map(|r| {
            let realization = config.realize(r)?;
            config
                .eps_grid
                .iter()
                .map(|&eps| {
                    let domain = build_perforated_domain(&realization, eps, config.q, &config.domain)?;
                    per_eps(&realization, &domain)
                })
                .collect()
        })
        .collect()
}

/// `ε^n N_ε(D)` against `λ |D|`.
pub fn counting_study(config: &StudyConfig) -> Result<StudyReport> {
    let n = config.dim() as i32;
    let samples = run_replicas(config, |_, d| Ok(vec![d.eps.powi(n) * d.len() as f64]))?;
    let target = config.intensity * config.domain.volume();
    Ok(StudyReport::assemble(
        StudyKind::Counting,
        config,
        Vec::new(),
        samples,
        vec![target; config.eps_grid.len()],
    ))
}

/// `ε^n Σ ρ_i^p` against `λ ⟨ρ^p⟩ |D|`.
pub fn mark_sum_study(config: &StudyConfig, p: f64) -> Result<StudyReport> {
    let moment = config.mark_law.moment(p)?;
    let n = config.dim() as i32;
    let samples = run_replicas(config, |_, d| {
        let s: f64 = d.marks.iter().map(|m| m.powf(p)).sum();
        Ok(vec![d.eps.powi(n) * s])
    })?;
    let target = config.intensity * moment * config.domain.volume();
    Ok(StudyReport::assemble(
        StudyKind::Marksum,
        config,
        Vec::new(),
        samples,
        vec![target; config.eps_grid.len()],
    ))
}

/// `ε^n Σ_{bad} ρ^{n−q}` with target 0, plus bad/good densities and the
/// density of thinned centres close to the safety layer.
pub fn negligible_subset_study(config: &StudyConfig) -> Result<StudyReport> {
    let n = config.dim() as i32;
    let delta = 1.0 / config.classify.m;
    let samples = run_replicas(config, |real, d| {
        let cls = classify(d, real, &config.classify)?;
        let en = d.eps.powi(n);
        Ok(vec![
            bad_capacity_sum(&cls, d),
            en * cls.bad.len() as f64,
            en * cls.good.len() as f64,
            en * cls.gm.len() as f64,
            near_safety_layer_density(&cls, d, delta),
            cls.r_eps,
        ])
    })?;
    let cols = ["bad_count_density", "good_count_density", "gm_count_density", "near_safety_density", "r_eps"];
    Ok(StudyReport::assemble(
        StudyKind::Negligible,
        config,
        cols.iter().map(|s| s.to_string()).collect(),
        samples,
        vec![0.0; config.eps_grid.len()],
    ))
}

/// Integral law over the `2/M`-thinned centres with kernel `κ(z, y) = φ_{y}(z)`
/// of the limit density, averaged over `B_{θε/M}(ε x_i)`.
pub fn integral_slln_study(config: &StudyConfig) -> Result<StudyReport> {
    let model = config.capacity_model()?;
    let n = config.dim();
    let m = config.classify.m;
    let theta = config.classify.theta;
    let rule = ShellRule::new(n, config.shell);
    let p = n as f64 - config.q;
    let clamped = config.mark_law.clamped_moment(p, m)?;
    let lq = config.bump.lq_norm_q(config.q);
    let samples = run_replicas(config, |real, d| {
        let keep = thin_indices(real, 2.0 / m);
        let mut kept = vec![false; real.len()];
        for &i in &keep {
            kept[i] = true;
        }
        let radius = theta * d.eps / m;
        let mut sum = 0.0;
        let mut count = 0usize;
        for h in 0..d.len() {
            if !kept[d.source[h]] {
                continue;
            }
            count += 1;
            let rho = d.marks[h].min(m);
            let avg = rule.average(d.centre(h), 0.0, radius, |x| model.phi_closed(rho, config.bump.value(x)));
            sum += avg;
        }
        let en = d.eps.powi(n as i32);
        Ok(vec![en * sum, en * count as f64 / config.domain.volume()])
    })?;
    let targets = (0..config.eps_grid.len())
        .map(|e| {
            let thinned: Vec<f64> = samples.iter().map(|rep| rep[e][1]).collect();
            let lambda_thin = mean_std(&thinned).0;
            lambda_thin * model.phi_closed(1.0, 1.0) * clamped * lq
        })
        .collect();
    Ok(StudyReport::assemble(
        StudyKind::Integral,
        config,
        vec!["thinned_intensity".into()],
        samples,
        targets,
    ))
}

/// `ū_i` over the level-0 annulus `C⁰_{ε,θ,M}(ε x_i)`.
pub fn boundary_average(bump: &Bump, centre: &[f64], eps: f64, theta: f64, m: f64, rule: &ShellRule) -> Result<f64> {
    let a = Annulus::dyadic(centre, theta, eps, m, 0)?;
    Ok(annulus_average(|x| bump.value(x), &a, rule))
}

/// `φ^j_{θ,ρ}(z)` at scale `ε`: closed form for the model integrand, solver otherwise.
pub fn truncated_capacity(model: &CapacityModel, eps: f64, theta: f64, rho: f64, z: f64, nodes: usize) -> Result<f64> {
    let (_, k) = critical_scale(eps, model.n, model.q)?;
    if model.is_model() {
        Ok(cap_q_annulus(model.n, model.q, rho, theta * k)? * z.abs().powf(model.q))
    } else {
        phi_truncated(model, theta, k, rho, z, nodes)
    }
}

/// `ε^n Σ_{G_M} φ^j_{θ,ρ_i}(ū_i)` on one perforated domain.
pub fn capacity_sum(
    config: &StudyConfig,
    model: &CapacityModel,
    domain: &PerforatedDomain,
    gm: &[usize],
    rule: &ShellRule,
) -> Result<f64> {
    let (m, theta) = (config.classify.m, config.classify.theta);
    let mut sum = 0.0;
    for &i in gm {
        let z = boundary_average(&config.bump, domain.centre(i), domain.eps, theta, m, rule)?;
        if z != 0.0 {
            sum += truncated_capacity(model, domain.eps, theta, domain.marks[i], z, config.cell_nodes)?;
        }
    }
    Ok(domain.eps.powi(domain.n as i32) * sum)
}

/// Discrete capacitary sum over `G_{ε,M}` against `λ ∫_D φ(u) dx`.
pub fn capacity_sum_study(config: &StudyConfig) -> Result<StudyReport> {
    let model = config.capacity_model()?;
    let rule = ShellRule::new(config.dim(), config.shell);
    let n = config.dim() as i32;
    let samples = run_replicas(config, |real, d| {
        let cls = classify(d, real, &config.classify)?;
        let value = capacity_sum(config, &model, d, &cls.gm, &rule)?;
        Ok(vec![value, d.eps.powi(n) * cls.gm.len() as f64])
    })?;
    let target = capacitary_target(config, &model)?;
    Ok(StudyReport::assemble(
        StudyKind::Capsum,
        config,
        vec!["gm_count_density".into()],
        samples,
        vec![target; config.eps_grid.len()],
    ))
}

/// `λ ∫_D φ(u) dx = λ φ(1) ∫_D |u|^q dx`.
pub fn capacitary_target(config: &StudyConfig, model: &CapacityModel) -> Result<f64> {
    let phi1 = average_capacity_density(model, &config.mark_law, 1.0)?;
    Ok(config.intensity * phi1 * config.bump.lq_norm_q(config.q))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config() -> StudyConfig {
        StudyConfig {
            intensity: 4.0,
            mark_law: MarkLaw::Constant { rho0: 1.0 },
            correlation: Correlation::Independent,
            domain: DomainDescriptor::unit_cube(3),
            q: 2.0,
            eps_grid: vec![0.2, 0.1],
            replicas: 2,
            classify: ClassifyParams::default(),
            bump: Bump::centred(3, 0.4, 1.0),
            integrand: Integrand::Model,
            mark_power: None,
            shell: study_shell(),
            cell_nodes: 400,
            seed: 11,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        assert!(c.validate().is_ok());
        c.eps_grid = vec![0.1, 0.2];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.replicas = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.bump.width = 0.6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_intensity_counts_zero() {
        let mut c = small_config();
        c.intensity = 0.0;
        let r = counting_study(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.mean == 0.0));
    }

    #[test]
    fn counting_equals_marksum_at_power_zero() {
        let mut c = small_config();
        c.mark_law = MarkLaw::Pareto { rho_min: 1.0, beta: 4.0 };
        let a = counting_study(&c).unwrap();
        let b = mark_sum_study(&c, 0.0).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.samples, y.samples);
        }
    }

    #[test]
    fn studies_are_deterministic() {
        let c = small_config();
        assert_eq!(capacity_sum_study(&c).unwrap(), capacity_sum_study(&c).unwrap());
        let mut other = c.clone();
        other.seed = 12;
        assert_ne!(counting_study(&c).unwrap(), counting_study(&other).unwrap());
    }

    #[test]
    fn zero_amplitude_gives_zero_sums() {
        let mut c = small_config();
        c.bump.amplitude = 0.0;
        let r = capacity_sum_study(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.mean == 0.0 && row.target == 0.0));
        let r = integral_slln_study(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.mean == 0.0 && row.target == 0.0));
    }

    #[test]
    fn trend_check() {
        assert!(non_increasing_with_inversions(&[0.3, 0.2, 0.1], 0));
        assert!(non_increasing_with_inversions(&[0.3, 0.35, 0.1], 1));
        assert!(!non_increasing_with_inversions(&[0.3, 0.35, 0.1, 0.2], 1));
    }

    #[test]
    fn csv_layout() {
        let r = negligible_subset_study(&small_config()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().nth(1).unwrap();
        assert!(header.starts_with("eps,replicas,mean,std,target,rel_err,bad_count_density"));
        assert_eq!(text.lines().count(), 2 + 2);
        assert_eq!(r.file_stem(), "negligible_seed11_eps0.2-0.1");
    }
}
