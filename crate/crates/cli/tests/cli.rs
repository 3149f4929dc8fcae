//! End-to-end runs of the `multigen` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multigen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn fit_recovers_parameters_from_two_moments() {
    let o = run(&["fit", "--beta1", "0.448", "--beta2", "0.3136", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let result = &v["result"];
    assert!((result["lambda"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    assert!((result["rho_sq"].as_f64().unwrap() - 0.64).abs() < 1e-12);
    assert_eq!(v["run"]["command"], "fit");
}

#[test]
fn infeasible_fit_is_a_numerical_failure() {
    let o = run(&["fit", "--beta1", "0.3", "--beta2", "0.5"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn missing_parameter_is_a_usage_error() {
    let o = run(&["simulate", "--model", "assortative", "--rho", "0.8", "--lambda", "0.7"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("assortative_m") && err.contains("--m"), "{err}");

    let o = run(&["moments", "--model", "latent_factor", "--rho", "1.5", "--lambda", "0.7"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&["replicate", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn moments_csv_carries_a_run_header() {
    let o = run(&["moments", "--model", "latent_factor", "--rho", "0.8", "--lambda", "0.7", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# multigen "), "{header}");
    assert!(header.contains("command=moments") && header.contains("seed=42"));
    assert_eq!(lines.next(), Some("k,beta_k"));
    assert_eq!(lines.next(), Some("1,0.448000"));
}

fn write_panel(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bad_panels_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bare = write_panel(
        dir.path(),
        "bare.csv",
        "person_id,dynasty_id,generation,father_id,y\n0,0,0,,0.5\n1,0,1,0,0.1\n2,1,0,,-0.2\n3,1,1,2,0.4\n",
    );
    let o = run(&["regress", "--panel", &bare, "--estimator", "multigen", "--controls", "spouse_y"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("spouse_id"));

    let backwards = write_panel(
        dir.path(),
        "backwards.csv",
        "person_id,dynasty_id,generation,father_id,y\n0,0,1,,0.5\n1,0,1,0,0.1\n",
    );
    let o = run(&["regress", "--panel", &backwards, "--estimator", "beta-k"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = run(&["regress", "--panel", "/nonexistent/panel.csv", "--estimator", "beta-k"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_then_regress() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    let p = panel.to_str().unwrap();
    let o = run(&[
        "--seed", "3", "simulate", "--model", "latent_factor", "--rho", "0.8", "--lambda", "0.7",
        "--dynasties", "5000", "--generations", "3", "--out", p,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&panel).unwrap();
    assert!(text.starts_with("# multigen ") && text.contains("seed=3"));

    let o = run(&["regress", "--panel", p, "--estimator", "multigen", "--lags", "1,2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Partial slope on the parent given the grandparent.
    let partial = 0.448 * (1.0 - 0.3136) / (1.0 - 0.448f64.powi(2));
    let bp = v["result"]["coefficients"]["parent_y"].as_f64().unwrap();
    assert!((bp - partial).abs() < 0.06, "{bp} vs {partial}");
    assert!(v["result"]["coefficients"]["grandparent_y"].is_number());
}

#[test]
fn config_file_runs_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{
  "schema_id": "multigen.run-config/v1",
  "seed": 9,
  "command": {
    "moments": {
      "model": {"model": "latent_factor", "params": {"returns_rho": 0.8, "transferability_lambda": 0.7}},
      "max_k": 2,
      "format": "csv"
    }
  }
}
"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let o = run(&["--config", c]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("seed=9"));
    assert!(out.contains("2,0.313600") && !out.contains("\n3,"));

    let o = run(&["--config", c, "--seed", "11"]);
    assert!(stdout(&o).contains("seed=11"));

    fs::write(&cfg, r#"{"schema_id": "multigen.run-config/v1", "seed": 1, "command": {"moments": {"modle": 1}}}"#).unwrap();
    let o = run(&["--config", c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("command.moments"), "{}", stderr(&o));
}

#[test]
fn replicate_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2");
    let o = run(&["replicate", "table2", "--out", out.to_str().unwrap()]);
    // A failed comparison is a result, not an error.
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.json", "series.csv", "table.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiment_id"], "table2");
    assert!(report["comparisons"].as_array().unwrap().len() >= 15);
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = multigen_cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(cfg.schema_id, multigen_cli::SCHEMA_ID);
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
