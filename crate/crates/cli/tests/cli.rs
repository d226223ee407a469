use std::path::{Path, PathBuf};
use std::process::Command;

use levy_nested::LevyTriplet;
use serde_json::Value;
use tempfile::TempDir;

const GAUSS: &str = r#"{"dimension": 1, "A": [[1.0]], "gamma": [0.2]}"#;
const ATOMS: &str = r#"{"dimension": 1, "gamma": [0.0], "levy": {"directions": [
    {"xi": [1.0], "weight": 1.0, "radial": {"kind": "atom", "r": 1.0, "mass": 1.0}},
    {"xi": [-1.0], "weight": 0.5, "radial": {"kind": "atom", "atoms": [{"r": 0.5, "mass": 0.7}, {"r": 2.0, "mass": 0.4}]}}]}}"#;
const STABLE: &str =
    r#"{"alpha": 0.7, "spherical": [[[1.0], 1.0], [[-1.0], 1.0]], "tau": [0.0], "scale": 1.0}"#;
// log-moment of order 1 is infinite
const HEAVY: &str = r#"{"dimension": 1, "gamma": [0.0], "levy": {"directions": [
    {"xi": [1.0], "weight": 1.0, "radial": {"kind": "density", "expr": "1/(r*log(r)^1.5)", "lower": 2.718281828459045}}]}}"#;

struct Run {
    code: i32,
    stdout: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).expect("report is JSON")
    }
}

fn levyn(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_levyn"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
    }
}

fn fixture(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_stable_passes_everything() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "stable.json", STABLE);
    let r = levyn(&["classify", &f]);
    assert_eq!(r.code, 0);
    let v = r.json();
    assert_eq!(v["seed"], 42);
    for c in v["verdict"]["classes"].as_array().unwrap() {
        assert_eq!(c["status"], "pass", "{c}");
    }
}

#[test]
fn psi_identity_is_printed() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "atoms.json", ATOMS);
    let r = levyn(&["verify", "--identity", "psi", &f]);
    assert_eq!(r.code, 0);
    assert!(r.json()["report"]["max_deviation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn double_upsilon_quadruples_variance() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "gauss.json", GAUSS);
    let out = path(&d, "m.json");
    let r = levyn(&[
        "map",
        "--kernel",
        "upsilon",
        "--iterations",
        "2",
        &f,
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0);
    let t = LevyTriplet::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((t.a[0][0] - 4.0).abs() < 1e-12);
    assert!(path(&d, "m.json.radial.csv").exists());
}

#[test]
fn mapped_triplet_round_trips() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "atoms.json", ATOMS);
    let out = path(&d, "u.json");
    assert_eq!(
        levyn(&["map", "--kernel", "U", &f, "--out", s(&out)]).code,
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let t = LevyTriplet::from_json(&text).unwrap();
    let again = LevyTriplet::from_json(&t.to_json().unwrap()).unwrap();
    assert_eq!(t.dimension, again.dimension);
    for (a, b) in t.gamma.iter().zip(&again.gamma) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(t, again);
    let csv = std::fs::read_to_string(path(&d, "u.json.radial.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let gauss = fixture(&d, "gauss.json", GAUSS);
    let heavy = fixture(&d, "heavy.json", HEAVY);
    let broken = fixture(&d, "broken.json", "{\"dimension\": 1, \"A\": ");
    let bad_a = fixture(&d, "bad.json", r#"{"dimension": 1, "A": [[-1.0]]}"#);
    let stable = fixture(&d, "s.json", STABLE);
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["map", "--kernel", "G", &gauss], 0),
        (vec!["stable", &stable], 0),
        (vec!["map", "--kernel", "Phi", &heavy], 1),
        (
            vec!["verify", "--identity", "log-moment", "--order", "0", &heavy],
            1,
        ),
        (
            vec!["simulate", "--kernel", "Phi", "--samples", "1000", &heavy],
            1,
        ),
        (vec!["map", "--kernel", "U", &broken], 2),
        (vec!["map", "--kernel", "U", &bad_a], 2),
        (vec!["map", "--kernel", "nope", &gauss], 2),
        (vec!["map", "--kernel", "U", "/nonexistent/x.json"], 2),
        (vec!["frobnicate", &gauss], 2),
        (vec!["map", "--kernel", "U", "--wat", &gauss], 2),
        (vec![], 2),
    ];
    for (args, want) in cases {
        assert_eq!(levyn(&args).code, want, "{args:?}");
    }
}

#[test]
fn simulate_echoes_seed_and_writes_samples() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "atoms.json", ATOMS);
    let bin = path(&d, "x.bin");
    let r = levyn(&[
        "simulate",
        "--kernel",
        "U",
        "--samples",
        "5000",
        "--seed",
        "7",
        &f,
        "--out",
        s(&bin),
    ]);
    assert_eq!(r.code, 0);
    let v = r.json();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["cf"]["passed"], true);
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 5000 * 8);

    let csv = path(&d, "x.csv");
    let again = levyn(&[
        "simulate",
        "--kernel",
        "U",
        "--samples",
        "5000",
        "--seed",
        "7",
        &f,
        "--out",
        s(&csv),
    ]);
    assert_eq!(again.json()["cf"], v["cf"]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5001);
}

#[test]
fn bernstein_writes_fit_and_gamma() {
    let d = TempDir::new().unwrap();
    let f = fixture(&d, "stable.json", STABLE);
    let out = path(&d, "b");
    let r = levyn(&["bernstein", "--nodes", "64", &f, "--out", s(&out)]);
    assert_eq!(r.code, 0);
    assert!(r.json()["reconstruction_residual"].as_f64().unwrap() < 0.02);
    for name in [
        "b.fit.0.csv",
        "b.gamma.0.csv",
        "b.fit.1.csv",
        "b.gamma.1.csv",
    ] {
        assert!(path(&d, name).exists(), "{name}");
    }
}

#[test]
fn other_identities() {
    let d = TempDir::new().unwrap();
    let atoms = fixture(&d, "atoms.json", ATOMS);
    let stable = fixture(&d, "stable.json", STABLE);
    let r = levyn(&[
        "verify",
        "--identity",
        "commutativity",
        "--kernel",
        "U",
        "--kernel",
        "G",
        &atoms,
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json()["report"]["passed"], true);
    let r = levyn(&[
        "verify",
        "--identity",
        "fixed-point",
        "--kernel",
        "U",
        &stable,
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json()["report"]["passed"], true);
    let r = levyn(&["verify", "--identity", "log-moment", "--order", "2", &atoms]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json()["report"]["passed"], true);
}

#[test]
fn iterate_and_custom_kernel() {
    let d = TempDir::new().unwrap();
    let atoms = fixture(&d, "atoms.json", ATOMS);
    let r = levyn(&["iterate", "--kernel", "U", "--iterations", "2", &atoms]);
    assert_eq!(r.code, 0);
    let steps = r.json()["steps"].clone();
    assert_eq!(steps[0]["nested_level"], 1);
    assert_eq!(steps[1]["nested_level"], 2);
    // p = 1 on (0,1) is the U kernel
    let gauss = fixture(&d, "gauss.json", GAUSS);
    let r = levyn(&["map", "--kernel-p", "1", "--t0", "1", &gauss]);
    assert_eq!(r.code, 0);
    let a = r.json()["triplet"]["A"][0][0].as_f64().unwrap();
    assert!((a - 1.0 / 3.0).abs() < 1e-8, "{a}");
}
