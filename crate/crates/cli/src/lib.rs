//! Command dispatch for the `perforate` binary.

pub mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use perforate::capacity::{capacity_table, write_capacity_csv};
use perforate::gamma::gamma_gap_study;
use perforate::homogenized::homogenized_minimize;
use perforate::process::generate;
use perforate::slln::{
    capacity_sum_study, counting_study, integral_slln_study, mark_sum_study, negligible_subset_study, StudyReport,
};
use serde::Serialize;

pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] perforate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for usage or configuration problems, 2 for numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(perforate::Error::NonConvergence { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    Counting,
    Marksum,
    Negligible,
    Integral,
    Capsum,
    Gamma,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub resolved: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects outputs and stage timings; writing the manifest consumes it.
pub struct Run {
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    pub fn start(command: &str, config_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_path: config_path.to_path_buf(),
                resolved: config.clone(),
                seed: config.process.seed,
                out_dir: out_dir.to_path_buf(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timings: Vec::new(),
                outputs: Vec::new(),
            },
            clock: Instant::now(),
        })
    }

    pub fn stage(&mut self, name: &str) {
        self.manifest.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.manifest.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.manifest.out_dir.join(name))?))
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        for f in &self.manifest.outputs {
            if !self.manifest.out_dir.join(f).exists() {
                return Err(CliError::Config(format!("declared output {f} is missing")));
            }
        }
        let out = BufWriter::new(File::create(self.manifest.out_dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(out, &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn realization_file(seed: u64) -> String {
    format!("realization_seed{seed}.csv")
}

pub fn cmd_generate(config: &RunConfig, config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let mut run = Run::start("generate", config_path, config, out)?;
    let realization = generate(&config.process_config()?)?;
    run.stage("generate");
    let mut w = run.create(&realization_file(config.process.seed))?;
    realization.write_csv(&mut w)?;
    drop(w);
    run.stage("write");
    run.finish()
}

pub fn run_study(kind: StudyKind, config: &RunConfig) -> Result<StudyReport, CliError> {
    let study = config.study_config()?;
    let report = match kind {
        StudyKind::Counting => counting_study(&study)?,
        StudyKind::Marksum => {
            let p = study.mark_power.unwrap_or(study.dim() as f64 - study.q);
            mark_sum_study(&study, p)?
        }
        StudyKind::Negligible => negligible_subset_study(&study)?,
        StudyKind::Integral => integral_slln_study(&study)?,
        StudyKind::Capsum => capacity_sum_study(&study)?,
        StudyKind::Gamma => gamma_gap_study(&study)?,
    };
    Ok(report)
}

pub fn cmd_study(
    kind: StudyKind,
    config: &RunConfig,
    config_path: &Path,
    out: &Path,
) -> Result<(StudyReport, RunManifest), CliError> {
    let mut run = Run::start("study", config_path, config, out)?;
    let report = run_study(kind, config)?;
    run.stage(report.kind.name());
    let stem = report.file_stem();
    let mut w = run.create(&format!("{stem}.csv"))?;
    report.write_csv(&mut w)?;
    drop(w);
    let w = run.create(&format!("{stem}.json"))?;
    report.write_json(w)?;
    run.stage("write");
    Ok((report, run.finish()?))
}

pub const CAPACITY_FILE: &str = "capacity_table.csv";

pub fn cmd_capacity_table(config: &RunConfig, config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let mut run = Run::start("capacity-table", config_path, config, out)?;
    let model = config.capacity_model()?;
    let c = &config.capacity;
    let rows = capacity_table(&model, &c.rhos, &c.outers, &c.zs, c.nodes)?;
    run.stage("solve");
    let mut w = run.create(CAPACITY_FILE)?;
    write_capacity_csv(&rows, &mut w)?;
    drop(w);
    run.stage("write");
    run.finish()
}

pub const HOMOGENIZED_FILE: &str = "homogenized.csv";

/// Minimizes the homogenized energy with the configured bump as forcing.
pub fn cmd_homogenize(config: &RunConfig, config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let mut run = Run::start("homogenize", config_path, config, out)?;
    let model = config.capacity_model()?;
    let bump = config.bump();
    bump.validate(&config.domain)?;
    let sol = homogenized_minimize(
        config.grid()?,
        &model,
        &config.process.mark_law,
        config.process.intensity,
        |x| bump.value(x),
    )?;
    run.stage("minimize");
    let mut w = run.create(HOMOGENIZED_FILE)?;
    sol.write_csv(&mut w)?;
    drop(w);
    run.stage("write");
    eprintln!(
        "homogenized energy {:.10e} after {} iterations (residual {:.2e})",
        sol.energy, sol.iterations, sol.residual
    );
    run.finish()
}
