use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perforate_cli::{
    cmd_capacity_table, cmd_generate, cmd_homogenize, cmd_study, CliError, Overrides, RunConfig, StudyKind,
};

/// Random perforated domains and Monte Carlo homogenization studies.
///
/// Seeds: every replica uses a substream derived from the single `--seed`
/// (or `process.seed`) by hashing a stage tag and the replica index, so any
/// stage re-run in isolation reproduces its outputs.
///
/// Recovery patches in the `gamma` study have radius θε around each
/// very-good hole.
#[derive(Parser, Debug)]
#[command(name = "perforate", version)]
struct Cli {
    /// TOML configuration with sections process, domain, scaling, classify, capacity, study.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `process.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the machine parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated decreasing ε values, overriding `scaling.eps_grid`.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// Overrides `study.replicas`.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one realization on ε⁻¹D at the smallest ε and write it as CSV.
    Generate,
    /// Run a Monte Carlo study and write CSV and JSON reports.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
    },
    /// Tabulate solver and closed-form capacity densities.
    CapacityTable,
    /// Minimize the homogenized energy with the configured bump as forcing.
    Homogenize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    config.apply(&Overrides {
        seed: cli.seed,
        eps_grid: cli.eps_grid,
        replicas: cli.replicas,
    });
    match cli.command {
        Command::Generate => {
            cmd_generate(&config, &path, &cli.out)?;
        }
        Command::Study { kind } => {
            let (report, _) = cmd_study(kind, &config, &path, &cli.out)?;
            println!(
                "{}: worst relative error {:.4} over eps grid {:?}",
                report.kind.name(),
                report.worst_rel_err(),
                report.eps_grid
            );
        }
        Command::CapacityTable => {
            cmd_capacity_table(&config, &path, &cli.out)?;
        }
        Command::Homogenize => {
            cmd_homogenize(&config, &path, &cli.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
