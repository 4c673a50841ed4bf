use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qgcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgcc"))
        .args(args)
        .output()
        .expect("qgcc runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows of a CSV table, split into fields.
fn rows(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("method,kappa,theta,feasible,bound,q,t,solver_status,wall_ms"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn analyze_popov_feasible() {
    let o = qgcc(&["analyze", "--method", "popov", "--kappa", "4.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0], "popov_analysis");
    assert_eq!(r[0][3], "true");
    let bound: f64 = r[0][4].parse().unwrap();
    assert!(bound.is_finite() && bound > 0.0);
}

#[test]
fn analyze_lossless_cavity_is_not_hurwitz() {
    let o = qgcc(&["analyze", "--kappa", "0"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("F not Hurwitz"), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r[0][4], "inf");
    assert_eq!(r[0][7], "not_hurwitz");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ \"system\": ");
    assert_eq!(code(&qgcc(&["analyze", "--config", &bad])), 2);
    let unknown = write(dir.path(), "unknown.json", r#"{"system": {"fixture": "dpa", "kappa": 5}, "bogus": 1}"#);
    assert_eq!(code(&qgcc(&["analyze", "--config", &unknown])), 2);
    assert_eq!(code(&qgcc(&["analyze", "--config", "/nonexistent/cfg.json"])), 2);
    assert_eq!(code(&qgcc(&["analyze", "--frobnicate"])), 2);
}

#[test]
fn explicit_system_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sys.json",
        r#"{
            "system": {"m1": [[[-1, 0]]], "m2": [[[0, 0.5]]], "n1": [[[2.449489742783178, 0]]]},
            "method": "popov",
            "theta_grid": {"from": 0, "to": 0.2, "step": 0.1}
        }"#,
    );
    let o = qgcc(&["analyze", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let explicit: f64 = rows(&stdout(&o))[0][4].parse().unwrap();
    let fixture = qgcc(&["analyze", "--method", "popov", "--kappa", "6"]);
    let fixed: f64 = rows(&stdout(&fixture))[0][4].parse().unwrap();
    assert!((explicit - fixed).abs() < 1e-6 * fixed, "{explicit} vs {fixed}");
}

#[test]
fn synthesize_writes_controller() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("k.json");
    let o = qgcc(&["synthesize", "--kappa", "4.5", "--controller", ctrl.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r[0][0], "smallgain_synthesis");
    assert_eq!(r[0][3], "true");
    let k: Value = serde_json::from_str(&std::fs::read_to_string(&ctrl).unwrap()).unwrap();
    assert_eq!(k["method"], "smallgain");
    assert!(k["k1"].is_array() && k["k2"].is_array());
}

#[test]
fn synthesis_thresholds_at_3_8() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("k.json");
    let ctrl = ctrl.to_str().unwrap();
    let sg = qgcc(&["synthesize", "--kappa", "3.8", "--controller", ctrl]);
    assert_eq!(code(&sg), 1);
    assert_eq!(rows(&stdout(&sg))[0][4], "inf");
    assert!(!Path::new(ctrl).exists());
    let p = qgcc(&["synthesize", "--kappa", "3.8", "--method", "popov", "--controller", ctrl]);
    assert_eq!(code(&p), 0, "{}", stderr(&p));
    assert!(Path::new(ctrl).exists());
}

#[test]
fn sweep_rows_are_ordered() {
    let o = qgcc(&[
        "sweep", "--param", "kappa", "--from", "4.5", "--to", "6", "--step", "0.5", "--task", "analysis", "--method",
        "popov",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kappas: Vec<String> = rows(&stdout(&o)).into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(kappas, ["4.5", "5", "5.5", "6"]);
    let t = qgcc(&["sweep", "--param", "theta", "--from", "0", "--to", "0.2", "--step", "0.1", "--kappa", "3.8"]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
    let r = rows(&stdout(&t));
    let thetas: Vec<&str> = r.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(thetas, ["0", "0.1", "0.2"]);
    assert!(r.iter().all(|r| r[0] == "popov_synthesis"));
}

#[test]
fn empty_sweep_range_exits_2() {
    let o = qgcc(&["sweep", "--param", "kappa", "--from", "5", "--to", "4", "--step", "0.5"]);
    assert_eq!(code(&o), 2);
    let o = qgcc(&["sweep", "--param", "kappa", "--from", "4", "--to", "5", "--step", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_sound_and_falsified() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("k.json");
    let ctrl = ctrl.to_str().unwrap();
    assert_eq!(code(&qgcc(&["synthesize", "--kappa", "4.5", "--controller", ctrl])), 0);
    let ok = qgcc(&["verify", "--controller", ctrl]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let rep: Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(rep["violations"], 0);
    assert_eq!(rep["sound"], true);
    assert_eq!(rep["seed"], 42);
    let bad = qgcc(&["verify", "--controller", ctrl, "--bound", "0"]);
    assert_eq!(code(&bad), 4);
    let rep: Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert!(rep["violations"].as_u64().unwrap() > 0);
}

#[test]
fn verify_is_reproducible() {
    let args = ["verify", "--method", "popov", "--kappa", "6", "--samples", "150", "--seed", "9"];
    let a = qgcc(&args);
    let b = qgcc(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = qgcc(&["verify", "--method", "popov", "--kappa", "6", "--samples", "150", "--seed", "10"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn realize_example() {
    let o = qgcc(&["realize", "--example", "--ktilde", "0.3333333333333333"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["sinh_r"].as_f64().unwrap() + 0.75).abs() < 1e-9);
    let b = &v["b"];
    let expected = [[1.25, -0.75], [-0.75, 1.25]];
    for (i, row) in expected.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let re = b[i][j][0].as_f64().unwrap();
            let im = b[i][j][1].as_f64().unwrap();
            assert!((re - x).abs() < 1e-9 && im.abs() < 1e-9, "B[{i}][{j}] = {re}+{im}i");
        }
    }
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn realize_rejections() {
    assert_eq!(code(&qgcc(&["realize", "--example", "--ktilde", "0"])), 2);
    assert_eq!(code(&qgcc(&["realize", "--example", "--ktilde", "5"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let z = "[[0, 0], [0, 0]]";
    let two_mode = format!(r#"{{"method": "popov", "k1": [{z}, {z}], "k2": [{z}, {z}]}}"#);
    let ctrl = write(dir.path(), "k.json", &two_mode);
    let o = qgcc(&["realize", "--controller", &ctrl, "--ktilde", "0.5"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
