use std::path::Path;
use std::process::{Command, Output};

use chbc::config::{default_config, DEFAULT_CONFIG, SYNTHETIC_CONFIG};
use chbc::io::read_checkpoint;

fn chbc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chbc"))
        .args(args)
        .current_dir(dir)
        .env_remove("CHBC_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_default_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = chbc(&["simulate", "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("run");
    let s = summary(&dir);
    assert!(s["min_mu"].as_f64().unwrap() >= -1e-8);
    assert!(dir.join("history.csv").exists());
    assert!(dir.join("fields/bulk_t0000.csv").exists());
    assert!(dir.join("fields/boundary_t0100.csv").exists());

    let cfg = default_config();
    let p = cfg.build_problem().unwrap();
    let st = p.simulate(&cfg.initial_control(&p)).unwrap();
    let ck = read_checkpoint(&dir.join("checkpoint.bin")).unwrap();
    let same = |a: &[chbc::BulkField], b: &[chbc::BulkField]| {
        a.iter().zip(b).all(|(x, y)| x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()))
    };
    assert!(same(&ck.mu, &st.mu));
    assert!(same(&ck.rho, &st.rho));
}

#[test]
fn inverted_box_is_rejected_citing_a4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &DEFAULT_CONFIG.replace("lower = -2.0", "lower = 2.5"));
    let out = chbc(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(A4)"));
}

#[test]
fn mismatched_terminal_weights_are_rejected_citing_a7() {
    let tmp = tempfile::tempdir().unwrap();
    let text = DEFAULT_CONFIG
        .replace("beta = [1.0, 1.0, 1.0, 1.0, 1.0, 0.01]", "beta = [1.0, 1.0, 1.0, 2.0, 1.0, 0.01]")
        .replace(
            "kind = \"reference\"\ncontrol = { kind = \"wave\", mean = 0.2, amplitude = 1.0, space_frequency = 1, time_frequency = 2.0 }",
            "kind = \"constant\"\nmu = 0.0\nrho = 0.1\nrho_boundary = 0.4",
        );
    let cfg = write_config(tmp.path(), &text);
    let out = chbc(&["optimize", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(A7)"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &DEFAULT_CONFIG.replace("[mesh]", "[mesh]\nshape = \"disk\""));
    let out = chbc(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_root_prefixes_relative_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_chbc"))
        .args(["invariants", "--out", "inv"])
        .current_dir(tmp.path())
        .env("CHBC_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(root.join("inv/summary.json").exists());
    assert!(!tmp.path().join("inv").exists());
}

#[test]
fn grad_check_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let out = chbc(&["grad-check", "--seed", "3", "--out", d], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(tmp.path().join("a/summary.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/summary.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn optimize_synthetic_reaches_reference_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SYNTHETIC_CONFIG);
    let out = chbc(&["optimize", "--config", &cfg, "--out", "opt"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("opt"));
    assert!(s["cost"]["total"].as_f64().unwrap() <= s["reference_cost"].as_f64().unwrap());
    let hist = std::fs::read_to_string(tmp.path().join("opt/history.csv")).unwrap();
    let costs: Vec<f64> = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn every_verification_command_succeeds_on_default() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["taylor-test", "stability-probe", "invariants"] {
        let out = chbc(&[cmd, "--out", cmd], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(summary(&tmp.path().join(cmd))["pass"], serde_json::Value::Bool(true));
    }
}
