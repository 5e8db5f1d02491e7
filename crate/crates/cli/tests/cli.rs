use std::path::PathBuf;
use std::process::{Command, Output};

use qsdlab_cli::{CliError, EXIT_CONTRACT, EXIT_NUMERIC, EXIT_USAGE};

fn fixture(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    root.join(format!("{name}.json")).display().to_string()
}

fn qsdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsdlab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV artifact, comment lines and header stripped.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn feller_flow_row() {
    let out = qsdlab(&["flow", "--mech", &fixture("feller"), "--t", "1", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("\nt,lambda,u,err_estimate,gap\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let u: f64 = rows[0][2].parse().unwrap();
    assert!((u - 0.5).abs() <= 1e-12, "{u}");
}

#[test]
fn negative_rate_of_decay_is_a_contract_error() {
    let out = qsdlab(&["qsd", "--mech", &fixture("stable_minus_half"), "--beta", "-1", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positive"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(qsdlab(&["flow", "--bogus"]).status.code(), Some(64));
    assert_eq!(qsdlab(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(qsdlab(&["flow", "--mech", "feller", "--t", "1", "--lambda", "1", "--backend", "rk4"]).status.code(), Some(64));
    assert_eq!(qsdlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn error_classes_map_to_exit_codes() {
    let numeric = CliError::Core(qsdlab::Error::Numeric("x".into()));
    let power = CliError::Core(qsdlab::Error::StatisticalPower("x".into()));
    let domain = CliError::Core(qsdlab::Error::Domain("x".into()));
    let noqsd = CliError::Core(qsdlab::Error::NoQsd {
        beta: 1.5,
        beta0: 1.0,
        ratio: 1.5,
    });
    assert_eq!(numeric.exit_code(), EXIT_NUMERIC);
    assert_eq!(power.exit_code(), EXIT_NUMERIC);
    assert_eq!(domain.exit_code(), EXIT_CONTRACT);
    assert_eq!(noqsd.exit_code(), EXIT_CONTRACT);
    assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
}

#[test]
fn missing_mechanism_file_exits_1() {
    let out = qsdlab(&["flow", "--mech", "/nonexistent/mech.json", "--t", "1", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fixture_names_resolve_without_files() {
    let by_name = qsdlab(&["flow", "--mech", "stable_minus_half", "--t", "1", "--lambda", "4"]);
    let by_file = qsdlab(&["flow", "--mech", &fixture("stable_minus_half"), "--t", "1", "--lambda", "4"]);
    assert_eq!(by_name.status.code(), Some(0));
    assert_eq!(stdout(&by_name), stdout(&by_file));
    // (√4 + 0.5)² = 6.25
    let u: f64 = csv_rows(&stdout(&by_name))[0][2].parse().unwrap();
    assert!((u - 6.25).abs() < 1e-12);
}

#[test]
fn dsbp_qsd_reports_the_sibuya_law_and_residual() {
    let out = qsdlab(&["dsbp", "qsd", "--alpha", "0.5", "--c", "1", "--n", "1", "--K", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("# truncation_residual: "));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 20);
    let p: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for (got, want) in p.iter().zip([0.5, 0.125, 0.0625, 5.0 / 128.0]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn dsbp_rate_off_the_spectrum_is_rejected() {
    let out = qsdlab(&["dsbp", "qsd", "--model", &fixture("sibuya_half"), "--beta", "0.75", "--K", "16"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no QSD"));
}

#[test]
fn json_output_is_parseable() {
    let out = qsdlab(&["classify", "--mech", "truncated_pareto_half", "--out", "json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["result"]["almost_sure_explosion"], serde_json::json!(true));
    assert_eq!(doc["manifest"]["subcommand"], serde_json::json!("classify"));
}

#[test]
fn output_file_gets_a_timestamped_sidecar_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.csv");
    let p = path.to_str().unwrap();
    let args = ["flow", "--mech", "linear_stable_minus", "--t", "0.5,2", "--lambda", "0.1,3", "--output", p];
    assert_eq!(qsdlab(&args).status.code(), Some(0));
    let first = std::fs::read(&path).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("flow.csv.manifest.json")).unwrap()).unwrap();
    assert!(sidecar["timestamp"].as_u64().unwrap() > 0);
    assert!(!String::from_utf8_lossy(&first).contains("timestamp"));
    assert_eq!(qsdlab(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn simulation_is_independent_of_thread_count() {
    let base = ["simulate", "--mech", "truncated_pareto_half", "--x", "1", "--times", "0.5,1", "--paths", "2000", "--seed", "42"];
    let one = qsdlab(&[&base[..], &["--threads", "1"]].concat());
    let three = qsdlab(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, three.stdout);
    let rows = csv_rows(&stdout(&one));
    assert_eq!(rows.len(), 4000);
    assert!(rows.iter().all(|r| ["alive", "extinct", "exploded", "inconclusive"].contains(&r[3].as_str())));
}

#[test]
fn deterministic_verify_passes_and_reproduces() {
    let a = qsdlab(&["verify", "--suite", "deterministic", "--seed", "7"]);
    let b = qsdlab(&["verify", "--suite", "deterministic", "--seed", "7", "--threads", "2"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["result"]["passed"], serde_json::json!(true));
}

#[test]
fn unknown_suite_is_a_config_error() {
    assert_eq!(qsdlab(&["verify", "--suite", "thm9"]).status.code(), Some(1));
}
