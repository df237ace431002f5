use std::fs;
use std::path::Path;

use tsfl_core::experiment::{
    compare_latency, metrics_header, report, run_experiment, MetricsTable, RunConfig, CSV_SCHEMA_VERSION,
};

const SMALL: &str = r#"{
  "scenario": "case1",
  "strategies": ["fedavg", "tsfl-dms"],
  "num_clients": 4,
  "data_size": 64,
  "batch_size": 8,
  "constants": {"intervals": 6},
  "seeds": [3, 1, 2]
}"#;

fn files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push(entry.strip_prefix(dir).unwrap().display().to_string());
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn two_strategies_three_seeds_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(SMALL).unwrap();
    let outcome = run_experiment(&cfg, dir.path(), 1).unwrap();
    assert_eq!(outcome.cells.len(), 6);
    assert_eq!(outcome.failed_cells(), 0);
    let names = files(dir.path());
    assert_eq!(names.iter().filter(|n| n.starts_with("runs/")).count(), 6);
    assert_eq!(names.iter().filter(|n| n.starts_with("reports/")).count(), 6);
    assert_eq!(names.iter().filter(|n| *n == "summary.csv").count(), 1);
    assert_eq!(outcome.summary.len(), 2);
}

#[test]
fn replay_is_byte_identical_and_parallelism_does_not_matter() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path(), 1).unwrap();
    run_experiment(&cfg, b.path(), 4).unwrap();
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn summary_is_recomputable_from_run_csvs() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg, dir.path(), 2).unwrap();
    let written = fs::read(dir.path().join("summary.csv")).unwrap();
    fs::remove_file(dir.path().join("summary.csv")).unwrap();
    let rows = report(dir.path()).unwrap();
    assert_eq!(rows, outcome.summary);
    assert_eq!(fs::read(dir.path().join("summary.csv")).unwrap(), written);
}

#[test]
fn metrics_csv_round_trips_and_uses_lf() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg, dir.path(), 1).unwrap();
    let cell = &outcome.cells[0];
    let path = dir.path().join("runs").join(format!("{}.csv", cell.id));
    let bytes = fs::read(&path).unwrap();
    assert!(!bytes.contains(&b'\r'));
    assert_eq!(&MetricsTable::read(&path).unwrap(), cell.metrics.as_ref().unwrap());
}

#[test]
fn golden_metrics_header() {
    assert_eq!(CSV_SCHEMA_VERSION, 1);
    let golden = "t,wall_clock,global_loss,grad_norm_sq,\
                  tau_1,beta_1,rho_1,tau_2,beta_2,rho_2,tau_3,beta_3,rho_3";
    assert_eq!(metrics_header(3).join(","), golden);

    let cfg = RunConfig::parse(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg, dir.path(), 1).unwrap();
    let text = fs::read_to_string(dir.path().join("runs").join(format!("{}.csv", outcome.cells[0].id))).unwrap();
    assert_eq!(text.lines().next().unwrap(), metrics_header(4).join(","));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "scenario,strategy,runs,failed,mean_final_loss,mean_wall_clock,participation"
    );
}

#[test]
fn failing_cell_does_not_stop_the_others() {
    // semiasync with a buffer larger than the population fails at run time.
    let text = r#"{
      "scenario": "case1",
      "strategies": ["semiasync", "fedavg"],
      "num_clients": 4,
      "data_size": 64,
      "batch_size": 8,
      "constants": {"intervals": 3},
      "options": {"buffer_size": 9},
      "seeds": [1]
    }"#;
    let cfg = RunConfig::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&cfg, dir.path(), 2).unwrap();
    assert_eq!(outcome.failed_cells(), 1);
    let report_text = fs::read_to_string(dir.path().join("reports/case1__semiasync__1.json")).unwrap();
    assert!(report_text.contains("\"failed\""));
    assert!(dir.path().join("runs/case1__fedavg__1.csv").exists());
    let rows = report(dir.path()).unwrap();
    let semi = rows.iter().find(|r| r.strategy == "semiasync").unwrap();
    assert_eq!((semi.runs, semi.failed), (0, 1));
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let parsed = RunConfig::parse(r#"{"scenario": "case1", "seeds": [1]}"#);
    assert!(parsed.is_err());
    assert!(!out.exists());
}

fn latency_config(extra: &str) -> RunConfig {
    RunConfig::parse(&format!(
        r#"{{
          "strategies": ["sfl", "tsfl-dms"],
          "num_clients": 4,
          "data_size": 64,
          "batch_size": 8,
          "constants": {{"intervals": 5}},
          "seeds": [7],
          {extra}
        }}"#
    ))
    .unwrap()
}

#[test]
fn homogeneous_latency_ratio_is_one() {
    let rows = compare_latency(&latency_config(r#""scenario": "homogeneous""#), None).unwrap();
    assert_eq!(rows[0].ratio, 1.0);
}

#[test]
fn case1_latency_ratio_at_most_half() {
    let cfg = latency_config(r#""scenario": "case1", "options": {"required_iterations": 4}"#);
    let rows = compare_latency(&cfg, None).unwrap();
    assert!(rows[0].ratio <= 0.5, "{rows:?}");
}

#[test]
fn heterogeneity_sweep_shape() {
    let cfg = latency_config(r#""scenario": "case1", "latency": {"heterogeneity": [0.0, 1.25, 2.25]}"#);
    let dir = tempfile::tempdir().unwrap();
    let rows = compare_latency(&cfg, Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1].sfl_wall_clock > w[0].sfl_wall_clock), "{rows:?}");
    assert!(rows.windows(2).all(|w| w[1].tsfl_wall_clock == w[0].tsfl_wall_clock));
    let text = fs::read_to_string(dir.path().join("latency.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn latency_needs_both_strategies() {
    let cfg = RunConfig::parse(r#"{"scenario": "case1", "strategies": ["sfl", "fedavg"]}"#).unwrap();
    assert!(compare_latency(&cfg, None).is_err());
}
