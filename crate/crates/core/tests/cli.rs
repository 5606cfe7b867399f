use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_sixbq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn check(r: &Value, name: &str) -> f64 {
    r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("missing check {name}"))["measured"]
        .as_f64()
        .unwrap()
}

#[test]
fn spectrum_table() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run(&["spectrum", "--override", "n=4"], tmp.path());
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(tmp.path().join("eigenvalues.csv")).unwrap();
    let omegas: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    for (w, w2) in omegas.iter().zip([3.0f64, 84.0, 819.0, 4368.0]) {
        assert!((w - w2.sqrt()).abs() < 1e-12 * w);
    }
    assert!(check(&report(tmp.path()), "orthonormality") <= 1e-12);

    let (code, _) = run(&["spectrum", "--override", "n=4", "--override", "beta=-1"], tmp.path());
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(tmp.path().join("eigenvalues.csv")).unwrap();
    let w1: f64 = rdr.records().next().unwrap().unwrap()[1].parse().unwrap();
    assert!((w1 - 1.0).abs() < 1e-15);
}

#[test]
fn simulate_zero_and_small() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run(&["simulate", "--override", "initial={kind=\"zero\"}"], tmp.path());
    assert_eq!(code, 0);
    let r = report(tmp.path());
    assert_eq!(r["results"]["x0_norm_final"], 0.0);
    assert_eq!(check(&r, "ut_mean_drift"), 0.0);

    let (code, _) = run(&["simulate"], tmp.path());
    assert_eq!(code, 0);
    let r = report(tmp.path());
    assert!(check(&r, "ut_mean_drift") <= 1e-10);
    assert!(check(&r, "u_mean_affine_deviation") <= 1e-10);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], r["config_sha256"]);
    assert!(manifest["files"]["series.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn control_trivial_and_linear() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = ["--override", "initial={kind=\"zero\"}", "--override", "terminal={kind=\"zero\"}"];
    let mut args = vec!["control"];
    args.extend(zero);
    let (code, _) = run(&args, tmp.path());
    assert_eq!(code, 0);
    assert_eq!(report(tmp.path())["results"]["report"]["control_norm"], 0.0);

    let (code, _) = run(&["control", "--override", "initial.amplitude=1.0", "--override", "terminal.amplitude=1.0"], tmp.path());
    assert_eq!(code, 0);
    assert!(check(&report(tmp.path()), "terminal_error") <= 1e-6);
}

#[test]
fn control_nonlinear_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(&["control", "--override", "control.nonlinear=true"], tmp.path());
    assert_eq!(code, 0, "{err}");
    let r = report(tmp.path());
    assert!(check(&r, "iterations") <= 20.0);
    assert!(check(&r, "terminal_error") <= 1e-5);
}

#[test]
fn control_rejects_unequal_means() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(&["control", "--override", "terminal.mean=0.3"], tmp.path());
    assert_eq!(code, 2);
    assert!(err.contains("equal_means"), "{err}");
    assert_eq!(report(tmp.path())["status"], "error");
}

#[test]
fn stabilize_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run(&["stabilize", "--override", "stabilize.gain=0", "--override", "n=4"], tmp.path());
    assert_eq!(code, 0);
    let r = report(tmp.path());
    assert!(r["results"]["energy_fit"]["gamma_hat"].as_f64().unwrap().abs() < 1e-10);

    let (code, _) = run(
        &["stabilize", "--override", "n=6", "--override", "g.kind=uniform", "--override", "stabilize.t_final=60"],
        tmp.path(),
    );
    assert_eq!(code, 0);
    let gamma = report(tmp.path())["results"]["energy_fit"]["gamma_hat"].as_f64().unwrap();
    let exact = 1.0 / (2.0 * std::f64::consts::PI);
    assert!((gamma / exact - 1.0).abs() < 0.05, "{gamma} vs {exact}");

    let (code, err) = run(
        &["stabilize", "--override", "initial={kind=\"cosine\",mode=1,amplitude=0.1,velocity=0.0}", "--override", "initial.velocity=0.0", "--override", "stabilize.t_final=1"],
        tmp.path(),
    );
    assert_eq!(code, 0, "{err}");
    let (code, err) = run(
        &["stabilize", "--override", "initial={kind=\"coefficients\",u=[[1,0.05,0.0],[-1,0.05,0.0]],v=[[0,0.1,0.0]]}"],
        tmp.path(),
    );
    assert_eq!(code, 2);
    assert!(err.contains("[u_t](0) = 0"), "{err}");
}

#[test]
fn stabilize_nonlinear_decays() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(
        &["stabilize", "--override", "stabilize.nonlinear=true", "--override", "stabilize.t_final=40", "--override", "stabilize.record_every=100"],
        tmp.path(),
    );
    assert_eq!(code, 0, "{err}");
    let fit = &report(tmp.path())["results"]["distance_fit"];
    assert!(fit["gamma_hat"].as_f64().unwrap() > 0.0);
    assert!(fit["r_squared"].as_f64().unwrap() >= 0.99);
}

#[test]
fn verify_and_negative_controls() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(&["verify"], tmp.path());
    assert_eq!(code, 0, "{err}");

    let (code, err) = run(&["verify", "--override", "g.scale=2"], tmp.path());
    assert_eq!(code, 4);
    assert!(err.contains("g_mean_zero"), "{err}");

    let (code, _) = run(&["verify", "--override", "verify.duplicate_frequency=true"], tmp.path());
    assert_eq!(code, 4);
    let r = report(tmp.path());
    assert!(r["results"]["gram_error"].as_str().unwrap().contains("singular"));
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        assert_eq!(run(&["control", "--seed", "11"], d).0, 0);
    }
    for f in ["report.json", "manifest.json", "control.csv", "series.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let (code, _) = run(&["control", "--seed", "12"], b.path());
    assert_eq!(code, 0);
    assert_ne!(std::fs::read(a.path().join("report.json")).unwrap(), std::fs::read(b.path().join("report.json")).unwrap());
}

#[test]
fn sweep_runs_each_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "n = 4\n[stabilize]\nt_final = 4.0\n[sweep]\ncommand = \"stabilize\"\nkey = \"stabilize.gain\"\nvalues = [0.5, 1.0, 2.0, 4.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let (code, err) = run(&["sweep", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code, 0, "{err}");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    let ratios: Vec<f64> = (0..4)
        .map(|i| report(&out.join(format!("run_{i:03}")))["results"]["period_contraction"]["r_hat"].as_f64().unwrap())
        .collect();
    assert!(ratios.windows(2).all(|p| p[1] < p[0]), "{ratios:?}");
}

#[test]
fn bad_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["spectrum", "--override", "beta=3"], tmp.path()).0, 2);
    assert_eq!(run(&["spectrum", "--override", "nonsense=1"], tmp.path()).0, 2);
    assert_eq!(run(&["spectrum", "--config", "/nonexistent.toml"], tmp.path()).0, 1);
}
