use gp_collapse::field::Field2D;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gpcollapse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpcollapse")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const COULOMB_SMALL: &str = r#"
output = "out"

[potential]
[[potential.points]]
x = [0.0, 0.0]
p = 1.0
h = -1.0

[grid]
n = 96

[schedule]
values = [0.9, 0.95]
"#;

#[test]
fn q_solve_writes_profile_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.csv");
    let out = gpcollapse(&["q-solve", "--out", s(&q)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&q).unwrap();
    assert_eq!(text.lines().next(), Some("r,Q,Qprime"));
    assert_eq!(text.lines().count(), 4002);
    let c = json(&dir.path().join("constants.json"));
    assert!((c["astar"].as_f64().unwrap() - 11.7008965246).abs() < 1e-9);
    assert!((c["q0"].as_f64().unwrap() - 2.2062008646).abs() < 1e-9);
    for key in ["mass", "kinetic", "quartic"] {
        assert!((c[key].as_f64().unwrap() / c["astar"].as_f64().unwrap() - if key == "quartic" { 2.0 } else { 1.0 }).abs() < 1e-5);
    }
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let out = gpcollapse(&["sweep", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn bad_arguments_and_fields_are_usage_errors() {
    assert_eq!(gpcollapse(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[grid]\nn = \"many\"\n");
    let out = gpcollapse(&["constants", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2") || String::from_utf8_lossy(&out.stderr).contains("2 |"));
}

#[test]
fn positive_wells_violate_the_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pos.toml", "[[potential.points]]\nx = [0.0, 0.0]\np = 1.0\nh = 1.0\n");
    assert_eq!(gpcollapse(&["potential-check", "--config", s(&cfg)]).status.code(), Some(3));
    assert_eq!(gpcollapse(&["constants", "--config", s(&cfg)]).status.code(), Some(3));
}

#[test]
fn constants_match_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", COULOMB_SMALL);
    let out = gpcollapse(&["constants", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = json(&dir.path().join("out/collapse_constants.json"));
    assert!((c["beta"].as_f64().unwrap() - 11.24265137).abs() < 1e-6);
    assert!((c["energy_limit"].as_f64().unwrap() + 10.8023526).abs() < 1e-6);
    assert!((c["lambda_star"].as_f64().unwrap() / c["beta"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn minimize_output_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h.toml",
        "output = \"h\"\nplot = true\na_over_astar = 0.0\n[potential]\ng = { kind = \"harmonic\", omega = 1.0 }\n\
         [grid]\nL = 8.0\nn = 96\nstencil = \"fourth-order\"\n[solver]\nresidual_tol = 1e-7\n",
    );
    let out = gpcollapse(&["minimize", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("h/minimize.json"));
    assert!((report["energy"]["total"].as_f64().unwrap() - 2.0).abs() < 1e-3);
    assert!(dir.path().join("h/ground_state.svg").exists());

    let u = Field2D::load(&dir.path().join("h/ground_state.bin")).unwrap();
    assert!((u.mass() - 1.0).abs() < 1e-12);
    let csv = dir.path().join("h/copy.csv");
    u.save(&csv).unwrap();
    let back = Field2D::load(&csv).unwrap();
    assert_eq!(back.grid, u.grid);
    assert!(back.data.iter().zip(&u.data).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn sweeps_are_reproducible_and_accept_a_stored_profile() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.csv");
    assert!(gpcollapse(&["q-solve", "--out", s(&q)]).status.success());
    let cfg = write_config(dir.path(), "c.toml", &format!("profile = \"q.csv\"\nplot = true\n{COULOMB_SMALL}"));
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out_dir in [&first, &second] {
        let out = gpcollapse(&["sweep", "--config", s(&cfg), "--out", s(out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(first.join("records.csv")).unwrap();
    assert_eq!(a, fs::read(second.join("records.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 3);
    let coarse = write_config(dir.path(), "coarse.toml", &COULOMB_SMALL.replace("n = 96", "n = 64"));
    assert_eq!(gpcollapse(&["sweep", "--config", s(&coarse)]).status.code(), Some(2));
    for f in ["fit.json", "sweep.json", "energy.svg", "h1.svg", "profile.svg"] {
        assert!(first.join(f).exists(), "{f}");
    }
}

#[test]
fn verify_passes_on_a_moderate_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.toml",
        "command = \"verify\"\noutput = \"v\"\n[[potential.points]]\nx = [0.0, 0.0]\np = 1.0\nh = -1.0\n[grid]\nn = 128\n",
    );
    let out = gpcollapse(&["run", "--config", s(&cfg)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("v/report.json"));
    assert_eq!(report["pass"], serde_json::Value::Bool(true), "{stdout}");
}
