use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infoclock"))
        .args(args)
        .current_dir(dir)
        .env_remove("INFOCLOCK_SEED")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn value_defaults_sweep_is_increasing_and_concave() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["value", "--defaults", "--out", "v.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let (h, rows) = read_csv(&dir.path().join("v.csv"));
    assert_eq!(h, ["k", "value", "cost", "net"]);
    assert_eq!(rows.len(), 10);
    let v = column(&h, &rows, "value");
    assert_eq!(v[0], 0.0);
    let inc: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(inc.iter().all(|d| *d > 0.0));
    assert!(inc.windows(2).all(|w| w[1] < w[0]));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["t0"], 4.0);
    assert_eq!(sidecar["config"]["utility"]["beta"], 0.001);
}

#[test]
fn value_of_natural_clock_is_zero() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["value", "--clock", "natural", "--out", "v.csv"]);
    assert!(out.status.success());
    let (h, rows) = read_csv(&dir.path().join("v.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(column(&h, &rows, "value")[0], 0.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let ill = write(&dir, "ill.json", r#"{"market": {"t0": 1, "T": 2}, "utility": {"kind": "crra", "gamma": 0.2}}"#);
    for cmd in ["value", "optimize"] {
        let out = run(dir.path(), &["--config", ill.to_str().unwrap(), cmd]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("t0/T = 0.5 <= (1-gamma)/gamma"));
    }
    let typo = write(&dir, "typo.json", r#"{"market": {"sigmaa": 0.2}}"#);
    let out = run(dir.path(), &["--config", typo.to_str().unwrap(), "value"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));
    let bad = write(&dir, "bad.json", r#"{"cost": {"kind": "quadratic", "lambda": -1}}"#);
    let out = run(dir.path(), &["--config", bad.to_str().unwrap(), "value"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cost.lambda"));
    assert_eq!(run(dir.path(), &["value", "--clock", "linear:k=0.5"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["simulate", "--strategy", "greedy"]).status.code(), Some(2));
}

#[test]
fn optimize_cara_default_parameters() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["optimize", "--out", "opt.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let (h, rows) = read_csv(&dir.path().join("opt.csv"));
    assert_eq!(h, ["t", "tau", "tau_prime"]);
    let tau = column(&h, &rows, "tau");
    let slope = column(&h, &rows, "tau_prime");
    assert!(tau.windows(2).all(|w| w[1] > w[0]));
    assert!(slope.windows(2).all(|w| w[1] < w[0]));
    assert!((slope.last().unwrap() - 1.0).abs() <= 1e-6);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("opt.csv.json")).unwrap()).unwrap();
    assert!(diag["diagnostics"]["ode_residual_max"].as_f64().unwrap() <= 1e-6);
    assert!(diag["shoot_param"].as_f64().unwrap() > 1.0);
}

#[test]
fn optimize_with_prohibitive_cost_is_natural() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"cost": {"kind": "quadratic", "lambda": 1e9}}"#);
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "optimize", "--out", "opt.csv"]);
    assert!(out.status.success());
    let (h, rows) = read_csv(&dir.path().join("opt.csv"));
    for (t, tau) in column(&h, &rows, "t").iter().zip(column(&h, &rows, "tau")) {
        assert!((tau - 4.0 - t).abs() <= 1e-6);
    }
}

#[test]
fn optimize_crra_reports_consistent_dual() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"utility": {"kind": "crra", "gamma": 2}}"#);
    let out = run(dir.path(), &["--config", cfg.to_str().unwrap(), "optimize", "--out", "opt.csv"]);
    assert!(out.status.success());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("opt.csv.json")).unwrap()).unwrap();
    assert_eq!(diag["y_star_consistency"], "PASS");
    assert!(diag["y_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_zero_is_deterministic_and_check_passes() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["simulate", "--strategy", "zero", "--paths", "50", "--steps", "20"]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["std_error"], 0.0);
    assert!((rep["terminal_wealth"]["mean"].as_f64().unwrap() - 1000.0 * 0.04f64.exp()).abs() < 1e-9);

    let out = run(
        dir.path(),
        &["--seed", "11", "simulate", "--check-closed-form", "--paths", "40000", "--steps", "250", "--out", "r.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(rep["closed_form"]["verdict"], "PASS");
    assert_eq!(rep["seed"], 11);
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let args = ["simulate", "--paths", "200", "--steps", "20"];
    let with_flag = run(dir.path(), &[&["--seed", "5"], &args[..]].concat());
    let with_env =
        Command::new(env!("CARGO_BIN_EXE_infoclock")).args(args).env("INFOCLOCK_SEED", "5").output().unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    let default = run(dir.path(), &args);
    assert_ne!(with_flag.stdout, default.stdout);
}

#[test]
fn filter_demo_variance_laws_and_determinism() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--seed", "3", "filter-demo", "--steps", "400", "--out", "a.csv"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let (h, rows) = read_csv(&dir.path().join("a.csv"));
    assert_eq!(h, ["t", "Y", "m", "Z", "true_mu", "var"]);
    let t = column(&h, &rows, "t");
    let var0 = column(&h, &rows, "var");
    for (t, v) in t.iter().zip(&var0) {
        assert!((v - 0.04 / (4.0 + t)).abs() < 1e-15);
    }
    run(dir.path(), &["--seed", "3", "filter-demo", "--steps", "400", "--out", "b.csv"]);
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());

    // rho = 0.9 is the linear clock with slope 1 / (1 - 0.81)
    let k = format!("linear:k={}", 1.0 / (1.0 - 0.81));
    run(dir.path(), &["--seed", "3", "--clock", &k, "filter-demo", "--steps", "400", "--out", "c.csv"]);
    let (h, rows) = read_csv(&dir.path().join("c.csv"));
    let var9 = column(&h, &rows, "var");
    assert!(var9.iter().zip(&var0).skip(1).all(|(a, b)| a < b));
}

#[test]
fn estimate_rho_recovers_constant_correlation() {
    let dir = TempDir::new().unwrap();
    let k = format!("linear:k={}", 1.0 / (1.0 - 0.49));
    let out = run(dir.path(), &["--seed", "7", "--clock", &k, "filter-demo", "--steps", "4096", "--out", "p.csv"]);
    assert!(out.status.success());
    let out =
        run(dir.path(), &["simulate", "--estimate-rho", "--paths-csv", "p.csv", "--window", "256", "--out", "rho.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("rho.csv"));
    let rho = column(&h, &rows, "rho_hat");
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    assert!((mean - 0.7).abs() < 0.05, "{mean}");
    assert!(rho.iter().all(|r| (r - 0.7).abs() < 0.2));
}
