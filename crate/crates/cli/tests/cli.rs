use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn echolab(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_echolab"));
    cmd.args(args).env_remove("ECHOLAB_SEED");
    if let Some(s) = seed {
        cmd.env("ECHOLAB_SEED", s);
    }
    cmd.output().expect("binary runs")
}

/// Writes `body` plus an `output_dir` line into `dir/config.toml`.
fn config(dir: &Path, out: &str, body: &str) -> String {
    let path = dir.join("config.toml");
    let out = dir.join(out);
    fs::write(&path, format!("output_dir = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_ok(dir: &Path, out: &str, body: &str) -> std::path::PathBuf {
    let cfg = config(dir, out, body);
    let o = echolab(&["run", &cfg], None);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let out = dir.join(out);
    let m = manifest(&out);
    assert_eq!(m["status"], "completed");
    for f in m["outputs"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file());
    }
    out
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_experiments_names_all_nine() {
    let o = echolab(&["list-experiments"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "lorenz_train",
        "lorenz_forecast",
        "fixed_point",
        "lyapunov",
        "homology",
        "gs_examples",
        "embedding_check",
        "value_learn",
        "pde_dirichlet",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn validate_reports_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "o", "experiment = \"value_learn\"\ngamma = 1.0\n");
    let o = echolab(&["validate", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("seed: missing"), "{err}");
    assert!(err.contains("gamma:"), "{err}");
    // The same file runs nothing.
    assert_eq!(echolab(&["run", &cfg], None).status.code(), Some(2));
    assert!(!dir.path().join("o").exists());

    let missing = dir.path().join("absent.toml");
    assert_eq!(echolab(&["validate", missing.to_str().unwrap()], None).status.code(), Some(2));

    let good = config(dir.path(), "o", "experiment = \"value_learn\"\nseed = 1\n");
    assert_eq!(echolab(&["validate", &good], None).status.code(), Some(0));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "o", "experiment = \"embedding_check\"\ntrials = 2\n");
    let o = echolab(&["run", &cfg], Some("41"));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&dir.path().join("o"))["config"]["seed"], 41);
    assert_eq!(echolab(&["validate", &cfg], Some("x")).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_three_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let body = "experiment = \"pde_dirichlet\"\nseed = 1\nn = 20\nell = 20\nell_prime = 20\nsolver = \"online\"\nonline.a = 1e6\nonline.k0 = 0.0\nonline.steps = 50\n";
    let cfg = config(dir.path(), "o", body);
    let o = echolab(&["run", &cfg], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().contains("diverged"));
    let m = manifest(&dir.path().join("o"));
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("diverged"));
    assert_eq!(m["config"]["parameters"]["online.a"], 1e6);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = "experiment = \"lorenz_train\"\nseed = 5\nreservoir.n = 20\ntraining.length = 400\ntraining.lambda = 1e-6\n";
    let a = run_ok(dir.path(), "a", body);
    let b = run_ok(dir.path(), "b", body);
    for f in ["predictions.csv", "readout.json", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = manifest(&a);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["parameters"]["task"], "zeta_from_xi");
    let csv = fs::read_to_string(a.join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
    // 17 significant digits.
    let first = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(first.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
}

#[test]
fn lorenz_forecast_and_fixed_point_run() {
    let dir = tempfile::tempdir().unwrap();
    let esn = "seed = 2\nreservoir.n = 40\ntraining.length = 3000\ntraining.lambda = 1e-6\n";
    let f = run_ok(dir.path(), "f", &format!("experiment = \"lorenz_forecast\"\nforecast.steps = 50\n{esn}"));
    assert_eq!(fs::read_to_string(f.join("forecast.csv")).unwrap().lines().count(), 51);
    assert!(json(&f.join("summary.json"))["valid_steps"].as_u64().unwrap() <= 50);

    let cfg = config(dir.path(), "p", &format!("experiment = \"fixed_point\"\n{esn}"));
    let o = echolab(&["run", &cfg], None);
    // A small reservoir may lack a fixed point near the wing; either way
    // the manifest records the outcome.
    let status = manifest(&dir.path().join("p"))["status"].clone();
    match o.status.code() {
        Some(0) => {
            assert_eq!(status, "completed");
            let r = json(&dir.path().join("p/fixed_point.json"));
            assert_eq!(r["targets"].as_array().unwrap().len(), 3);
            assert_eq!(fs::read_to_string(dir.path().join("p/eigenvalues.csv")).unwrap().lines().count(), 41);
        }
        Some(3) => assert_eq!(status, "failed"),
        other => panic!("unexpected exit {other:?}"),
    }
}

#[test]
fn lyapunov_lorenz_writes_three_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(dir.path(), "o", "experiment = \"lyapunov\"\nseed = 1\nsteps = 2000\n");
    let e = json(&out.join("exponents.json"));
    assert_eq!(e["exponents"].as_array().unwrap().len(), 3);
    assert!(fs::read_to_string(out.join("running_means.csv")).unwrap().starts_with("iter,lambda_1,lambda_2,lambda_3\n"));
    let esn = run_ok(
        dir.path(),
        "e",
        "experiment = \"lyapunov\"\nseed = 1\nsystem = \"esn\"\nsteps = 200\ntransient = 50\nreservoir.n = 20\ntraining.length = 500\nesn.exponents = 2\n",
    );
    assert_eq!(json(&esn.join("exponents.json"))["exponents"].as_array().unwrap().len(), 2);
}

#[test]
fn homology_on_short_lorenz_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(dir.path(), "o", "experiment = \"homology\"\nseed = 1\nlandmarks = 60\ntraining.length = 3000\n");
    let h = json(&out.join("h1.json"));
    assert_eq!(h["landmarks"], 60);
    assert_eq!(fs::read_to_string(out.join("landmarks.csv")).unwrap().lines().count(), 61);
    assert!(fs::read_to_string(out.join("diagram.csv")).unwrap().starts_with("degree,birth,death\n"));
}

#[test]
fn gs_examples_variants() {
    let dir = tempfile::tempdir().unwrap();
    let t = run_ok(dir.path(), "t", "experiment = \"gs_examples\"\nseed = 1\nsteps = 800\nburn_in = 500\n");
    assert!(json(&t.join("summary.json"))["min_gap"].as_f64().unwrap() > 0.5);
    let s = run_ok(dir.path(), "s", "experiment = \"gs_examples\"\nseed = 1\nexample = \"signed_power\"\nprobes = 200\nxi_range_steps = 2000\n");
    assert_eq!(fs::read_to_string(s.join("contraction.csv")).unwrap().lines().count(), 9);
    let p = run_ok(dir.path(), "p", "experiment = \"gs_examples\"\nseed = 1\nexample = \"polar_square\"\nsteps = 100\nburn_in = 0\ninput.amplitude = 0.0\n");
    let runs = json(&p.join("summary.json"))["runs"].clone();
    // ρ ↦ ρ² from 4 grows without bound; 0.25 and 1 stay finite.
    assert_eq!(runs[0]["diverged"], false);
    assert_eq!(runs[1]["diverged"], false);
    assert_eq!(runs[2]["diverged"], true);
}

#[test]
fn embedding_value_and_pde_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_ok(dir.path(), "e", "experiment = \"embedding_check\"\nseed = 1\ntrials = 10\n");
    let s = json(&e.join("summary.json"));
    assert_eq!((s["condition_c"].as_u64(), s["condition_d"].as_u64()), (Some(10), Some(10)));

    let v = run_ok(dir.path(), "v", "experiment = \"value_learn\"\nseed = 1\npath.length = 3000\nmc.rollouts = 300\n");
    let r = json(&v.join("value.json"));
    assert!(r["max_offline_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(fs::read_to_string(v.join("value.csv")).unwrap().lines().count(), 3);

    let p = run_ok(dir.path(), "p", "experiment = \"pde_dirichlet\"\nseed = 1\nn = 50\nell = 50\nell_prime = 50\nlambda = 1e-6\n");
    let r = json(&p.join("report.json"));
    assert!(r["grid_rms"].as_f64().unwrap().is_finite());
    assert_eq!(fs::read_to_string(p.join("field.csv")).unwrap().lines().count(), 50 * 200 + 1);
}
