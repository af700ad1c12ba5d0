use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Duration;

use recsim_core::config::{parse_config, ExperimentConfig};
use recsim_core::error::Error;
use recsim_core::experiment::run_experiment;
use recsim_core::io::{self, load_results, read_manifest, read_metrics, write_outputs};
use recsim_core::AlgorithmKind;

fn tiny() -> ExperimentConfig {
    ExperimentConfig { m: 12, rounds: 6, k_train: 2, n_runs: 2, ..ExperimentConfig::desk() }
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn empty_config_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    fs::write(&path, "").unwrap();
    assert_eq!(parse_config(&path).unwrap(), ExperimentConfig::default());
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "m = 0\n").unwrap();
    assert!(matches!(parse_config(&path), Err(Error::Config { field: "m", .. })));
    fs::write(&path, "k_top_pct = 150\n").unwrap();
    assert!(matches!(parse_config(&path), Err(Error::Config { field: "k_top_pct", .. })));
    fs::write(&path, "m = 10\nbogus = 1\n").unwrap();
    let err = parse_config(&path).unwrap_err();
    assert!(matches!(err, Error::ConfigParse { line: Some(2), .. }), "{err}");
    assert!(err.to_string().contains("bogus"));
}

#[test]
fn outputs_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let results = run_experiment(&tiny(), &[AlgorithmKind::None, AlgorithmKind::Hybrid]).unwrap();
    let manifest = write_outputs(&results, &out, false, Duration::ZERO).unwrap();

    assert_eq!(manifest.runs.len(), 4);
    assert_eq!(fs::read_dir(out.join("logs")).unwrap().count(), 4);
    assert_eq!(csv_rows(&out.join(io::METRICS_FILE)), 4);
    assert!(manifest.files().all(|f| out.join(f).is_file()));
    assert_eq!(read_manifest(&out).unwrap(), manifest);
    assert_eq!(csv_rows(&out.join(&manifest.runs[0].log)), 12 * 6);
    let header = fs::read_to_string(out.join(&manifest.runs[0].log)).unwrap();
    assert!(header.starts_with("run_id,algorithm,round,user_id,item_id\n"));

    let reloaded = load_results(&out).unwrap();
    for (a, b) in results.records.iter().zip(&reloaded.records) {
        assert_eq!(a.log, b.log);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.inter.to_bits(), b.report.inter.to_bits());
    }
    let stored = read_metrics(&out.join(io::METRICS_FILE)).unwrap();
    assert_eq!(stored, results.reports().cloned().collect::<Vec<_>>());

    let again = write_outputs(&results, &out, false, Duration::ZERO);
    assert!(matches!(again, Err(Error::OutputExists(_))));
    write_outputs(&results, &out, true, Duration::ZERO).unwrap();
}

#[test]
fn failed_write_leaves_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(out.join("weights")).unwrap();
    let results = run_experiment(&tiny(), &[AlgorithmKind::None]).unwrap();
    // a directory where a weights file should go makes that write fail
    fs::create_dir_all(out.join("weights").join(io::run_stem(AlgorithmKind::None, 0))).unwrap();
    assert!(write_outputs(&results, &out, false, Duration::ZERO).is_err());
    assert!(!out.join(io::MANIFEST_FILE).exists());
    assert!(!out.join("logs").join(io::run_stem(AlgorithmKind::None, 0)).exists());
}

fn recsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_recsim")).args(args).output().unwrap()
}

#[test]
fn cli_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, tiny().to_toml_string()).unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let config_s = config.to_str().unwrap();

    let run = recsim(&["run", "--config", config_s, "--algorithms", "none,hybrid", "--seeds", "3", "--out-dir", out_s]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_dir(out.join("logs")).unwrap().count(), 6);
    assert_eq!(csv_rows(&out.join(io::METRICS_FILE)), 6);

    let refused = recsim(&["run", "--config", config_s, "--out-dir", out_s]);
    assert!(!refused.status.success());

    let metrics = recsim(&["metrics", "--out-dir", out_s]);
    assert!(metrics.status.success());
    assert_eq!(String::from_utf8(metrics.stdout).unwrap(), fs::read_to_string(out.join(io::METRICS_FILE)).unwrap());
    assert!(metrics.stderr.is_empty(), "{}", String::from_utf8_lossy(&metrics.stderr));

    assert!(recsim(&["curves", "--out-dir", out_s]).status.success());
    let deviation = fs::read_to_string(out.join("curves/deviation.csv")).unwrap();
    assert!(deviation.starts_with("algorithm,bin_lo,bin_hi,count,mean,std\n"));

    let compare = recsim(&["compare", "--out-dir", out_s]);
    assert!(compare.status.success());
    let json: serde_json::Value = serde_json::from_slice(&compare.stdout).unwrap();
    for key in ["pearson_fig2", "pearson_appB", "kendall_tau", "exact_ranking_match", "algorithms"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn cli_reads_out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, tiny().to_toml_string()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_recsim"))
        .args(["run", "--config", config.to_str().unwrap(), "--algorithms", "none", "--seeds", "1"])
        .env("RECSIM_OUT_DIR", dir.path().join("env"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("env").join(io::MANIFEST_FILE).is_file());
}

#[test]
fn cli_rejects_unknown_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let out = recsim(&["run", "--desk", "--algorithms", "nope", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}
