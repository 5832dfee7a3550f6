use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_macroent"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn macroent")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("macroent-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Same keys everywhere, numbers equal to within `tol`.
fn assert_json_close(got: &Value, want: &Value, path: &str, tol: f64) {
    match (got, want) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{path}: {a} vs {b}");
        }
        (Value::Object(a), Value::Object(b)) => {
            let ka: Vec<_> = a.keys().collect();
            let kb: Vec<_> = b.keys().collect();
            assert_eq!(ka, kb, "{path}: keys differ");
            for (k, v) in b {
                assert_json_close(&a[k], v, &format!("{path}.{k}"), tol);
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            assert_eq!(a.len(), b.len(), "{path}: length differs");
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                assert_json_close(x, y, &format!("{path}[{i}]"), tol);
            }
        }
        _ => assert_eq!(got, want, "{path}"),
    }
}

fn golden(state: &str) {
    let out = run(&["analyze", "--state", state, "--n", "6", "--measures", "p,q,entropy,concurrence,census,eb,backaction"]);
    let got = json(&out);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{state}_6.json"));
    let want: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_json_close(&got, &want, "$", 1e-8);
}

#[test]
fn golden_ghz_6() {
    golden("ghz");
}

#[test]
fn golden_cluster_6() {
    golden("cluster");
}

#[test]
fn report_echoes_version_seed_and_thresholds() {
    let r = json(&run(&["analyze", "--state", "w", "--n", "5", "--measures", "census,eb", "--eps", "0.2", "--delta", "0.4", "--threshold", "0.05", "--seed", "9"]));
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["seed"], 9);
    assert_eq!(r["thresholds"]["eps"], 0.2);
    assert_eq!(r["thresholds"]["delta"], 0.4);
    assert_eq!(r["thresholds"]["census_threshold"], 0.05);
    assert_eq!(r["eb"]["eps"], 0.2);
    assert_eq!(r["census"]["threshold"], 0.05);
    assert!(r.get("p").is_none() && r.get("q").is_none());
}

#[test]
fn ghz_8_sections() {
    let r = json(&run(&["analyze", "--state", "ghz", "--n", "8", "--measures", "p,eb,entropy"]));
    assert!((r["p"]["max_fluctuation"].as_f64().unwrap() - 64.0).abs() < 1e-9);
    assert!((r["entropy"]["half_cut_bits"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(r["eb"]["eb_count"], 8);
}

#[test]
fn product_top_eigenvalue() {
    let r = json(&run(&["analyze", "--state", "product", "--n", "6", "--measures", "p"]));
    assert!((r["p"]["e1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_fits() {
    let p = |state: &str| {
        let r = json(&run(&["sweep", "--state", state, "--n-grid", "4:12:2", "--measure", "p"]));
        assert_eq!(r["n_grid"], serde_json::json!([4, 6, 8, 10, 12]));
        r["p_hat"].as_f64().unwrap()
    };
    assert!((p("ghz") - 2.0).abs() <= 0.02);
    assert!(p("cluster") <= 1.1);
    let r = json(&run(&["sweep", "--state", "ghz-mixture", "--n-grid", "4:8:2", "--measure", "q", "--seed", "7"]));
    assert!(r["q_hat"].as_f64().unwrap() <= 1.2);
}

#[test]
fn csv_is_byte_identical_under_seed() {
    let args = ["sweep", "--state", "random", "--n-grid", "4:8:2", "--measure", "entropy", "--seed", "3", "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("n,value,measure\n"));
    assert_eq!(text.lines().count(), 4);

    let table = ["analyze", "--state", "random", "--n", "5", "--measures", "concurrence", "--seed", "3", "--format", "csv"];
    assert_eq!(run(&table).stdout, run(&table).stdout);
}

#[test]
fn out_flag_writes_file() {
    let path = tmp("sweep.csv");
    let out = run(&["sweep", "--state", "ghz", "--n-grid", "4:8:2", "--measure", "eb", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().nth(1), Some("4,4.000000000000,eb"));
}

#[test]
fn config_file_with_flag_override() {
    let path = tmp("run.conf");
    std::fs::write(&path, "# sweep settings\nstate = ghz\nn-grid = 4:8:2\nmeasure = p\nformat = csv\n").unwrap();
    let out = run(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("8,64.000000000000,p"));
    let out = run(&["sweep", "--config", path.to_str().unwrap(), "--state", "product"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("8,8.000000000000,p"));
}

#[test]
fn infeasible_sizes_exit_3() {
    for args in [
        vec!["analyze", "--state", "ghz", "--n", "40", "--measures", "q"],
        vec!["analyze", "--state", "ghz", "--n", "15", "--measures", "p"],
        vec!["analyze", "--state", "ghz", "--n", "11", "--measures", "q"],
        vec!["analyze", "--state", "ghz-mixture", "--n", "11", "--measures", "q"],
        vec!["sweep", "--state", "ghz", "--n-grid", "8:16:4", "--measure", "p"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 3, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["analyze", "--state", "nope", "--n", "4"],
        vec!["analyze", "--state", "ghz"],
        vec!["analyze", "--state", "ghz", "--n", "4", "--measures", "p,zz"],
        vec!["analyze", "--state", "ghz", "--n", "4", "--eps", "2"],
        vec!["analyze", "--state", "ghz", "--n", "4", "--k", "2"],
        vec!["analyze", "--state", "ghz-mixture", "--n", "4", "--measures", "p"],
        vec!["analyze", "--state", "ghz", "--n", "4", "--measures", "p", "--format", "csv"],
        vec!["sweep", "--state", "ghz", "--n-grid", "4:6:2", "--measure", "p"],
        vec!["sweep", "--state", "ghz", "--n-grid", "4-8", "--measure", "p"],
        vec!["sweep", "--state", "ghz", "--n-grid", "4:8:2", "--measure", "p", "--config", "/nonexistent/file"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn validate_reports_per_property_counts() {
    let out = run(&["validate", "--corpus-size", "4", "--seed", "2", "--format", "csv"]);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.starts_with("module,property,cases,failures,worst_excess,status\n"));
    assert!(text.lines().count() > 20);
    let failing = text.lines().skip(1).filter(|l| l.ends_with("FAIL")).count();
    assert_eq!(code(&out), if failing == 0 { 0 } else { 1 });
    let again = run(&["validate", "--corpus-size", "4", "--seed", "2", "--format", "csv"]);
    assert_eq!(again.stdout, text.as_bytes());
}

#[test]
fn injected_fault_exits_1() {
    let out = run(&["validate", "--corpus-size", "2", "--inject-fault"]);
    assert_eq!(code(&out), 1);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["properties"].as_array().unwrap().iter().any(|p| p["failures"].as_u64().unwrap() > 0));
}
