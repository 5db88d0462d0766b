use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use perforate::slln::{capacity_sum_study, counting_study};
use perforate_cli::{CliError, RunConfig, CAPACITY_FILE, MANIFEST_FILE};

const BASE: &str = r#"
[process]
intensity = 10.0
mark_law = { kind = "constant", rho0 = 1.0 }
seed = 5

[domain]
dim = 3
shape = { kind = "box", half_widths = [0.5, 0.5, 0.5] }

[scaling]
q = 2.0
eps_grid = [0.2, 0.1]

[study]
replicas = 2
"#;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_perforate")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn empty_process_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("intensity = 10.0", "intensity = 0.0"));
    let out = tmp.path().join("o");
    let o = run(&cfg, &out, &["generate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("realization_seed5.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# schema="));
    assert_eq!(lines[1], "x1,x2,x3,rho");
}

#[test]
fn generated_count_is_within_poisson_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("[0.2, 0.1]", "[0.05]"));
    let out = tmp.path().join("o");
    assert!(run(&cfg, &out, &["generate"]).status.success());
    let rows = data_rows(&out.join("realization_seed5.csv")).len() as f64;
    // λ|ε⁻¹D| = 10 · 20³; 99% two-sided normal quantile 2.5758 is accurate at this mean
    let mean = 8.0e4;
    assert!((rows - mean).abs() <= 2.5758 * mean.sqrt(), "{rows} rows");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("o");
    assert!(run(&cfg, &out, &["--seed", "77", "generate"]).status.success());
    assert!(out.join("realization_seed77.csv").exists());
}

#[test]
fn counting_kind_reproduces_library_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), BASE);
    let out = tmp.path().join("o");
    let o = run(&cfg_path, &out, &["study", "counting"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("worst relative error"));
    let config = RunConfig::parse(BASE).unwrap();
    let report = counting_study(&config.study_config().unwrap()).unwrap();
    let mut expected = Vec::new();
    report.write_csv(&mut expected).unwrap();
    let written = std::fs::read(out.join(format!("{}.csv", report.file_stem()))).unwrap();
    assert_eq!(written, expected);
    assert!(out.join(format!("{}.json", report.file_stem())).exists());
}

#[test]
fn capsum_kind_matches_direct_call() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace("intensity = 10.0", "intensity = 0.05").replace("replicas = 2", "replicas = 1");
    let cfg_path = write_config(tmp.path(), &text);
    let out = tmp.path().join("o");
    assert!(run(&cfg_path, &out, &["study", "capsum"]).status.success());
    let report = capacity_sum_study(&RunConfig::parse(&text).unwrap().study_config().unwrap()).unwrap();
    let mut expected = Vec::new();
    report.write_csv(&mut expected).unwrap();
    assert_eq!(std::fs::read(out.join(format!("{}.csv", report.file_stem()))).unwrap(), expected);
    assert!(report.rows.iter().any(|r| r.mean > 0.0));
}

#[test]
fn gamma_kind_emits_energy_breakdown_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), &BASE.replace("replicas = 2", "replicas = 1"));
    let out = tmp.path().join("o");
    assert!(run(&cfg_path, &out, &["study", "gamma"]).status.success());
    let csv = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("gamma_") && p.extension().unwrap() == "csv")
        .unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    for col in ["bulk", "capacitary", "corrections", "total", "target", "gap"] {
        assert!(header.contains(&col), "missing {col} in {header:?}");
    }
}

#[test]
fn capacity_table_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.to_string()
        + "\n[capacity]\nrhos = [1.0, 2.0]\nouters = [30.0, inf]\nzs = [0.0, 1.0]\nnodes = 2000\n";
    let cfg_path = write_config(tmp.path(), &text);
    let out = tmp.path().join("o");
    assert!(run(&cfg_path, &out, &["capacity-table"]).status.success());
    let rows = data_rows(&out.join(CAPACITY_FILE));
    assert_eq!(rows.len(), 8);
    let mut saw_golden = false;
    for row in &rows {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect();
        let (rho, k, z, value, rel) = (f[2], f[4], f[5], f[6], f[8]);
        if z == 0.0 {
            assert_eq!(value, 0.0);
        }
        assert!(rel < 1e-2, "{row}");
        if rho == 1.0 && k.is_infinite() && z == 1.0 {
            saw_golden = true;
            assert!((value - 4.0 * std::f64::consts::PI).abs() < 1e-2 * value, "{row}");
        }
    }
    assert!(saw_golden);
}

#[test]
fn manifest_is_written_and_lists_existing_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), BASE);
    let out = tmp.path().join("o");
    assert!(run(&cfg_path, &out, &["generate"]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 5);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    let manifest_time = std::fs::metadata(out.join(MANIFEST_FILE)).unwrap().modified().unwrap();
    for f in outputs {
        let meta = std::fs::metadata(out.join(f.as_str().unwrap())).unwrap();
        assert!(meta.modified().unwrap() <= manifest_time);
    }
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let typo = write_config(tmp.path(), &BASE.replace("replicas = 2", "replica = 2"));
    let o = run(&typo, &out, &["study", "counting"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replica"));

    let cfg = write_config(tmp.path(), BASE);
    assert_eq!(run(&cfg, &out, &["study", "bogus"]).status.code(), Some(1));

    let bad_q = write_config(tmp.path(), &BASE.replace("q = 2.0", "q = 3.0"));
    assert_eq!(run(&bad_q, &out, &["capacity-table"]).status.code(), Some(1));

    let none = Command::new(bin()).arg("generate").output().unwrap();
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn non_convergence_maps_to_two() {
    let e = CliError::Core(perforate::Error::NonConvergence {
        what: "test",
        iterations: 1,
        achieved: 1.0,
        wanted: 0.0,
    });
    assert_eq!(e.exit_code(), 2);
    assert_eq!(CliError::Config("x".into()).exit_code(), 1);
}

#[test]
fn eps_grid_and_replicas_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("o");
    let o = run(&cfg, &out, &["--eps-grid", "0.25,0.125", "--replicas", "1", "--threads", "1", "study", "counting"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out.join("counting_seed5_eps0.25-0.125.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("1")));
}
