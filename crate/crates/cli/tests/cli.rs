use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const HALF_TURN: f64 = std::f64::consts::PI;

fn ohtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ohtlab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ohtlab(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn simulate(dir: &Path, name: &str, config: &str) -> PathBuf {
    let cfg = write_config(dir, &format!("{name}.json"), config);
    let out = dir.join(name);
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    out.join("dataset.jsonl")
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn vacuum_record_validates_with_unit_half_variance() {
    let dir = tempfile::tempdir().unwrap();
    let ds = simulate(dir.path(), "vac", r#"{"seed": 11, "state": {"kind": "vacuum"}, "n_samples": 1000000}"#);
    let diag: Value = serde_json::from_slice(&ok(&["validate", path(&ds)]).stdout).unwrap();
    assert_eq!(diag["ok"], true);
    let var = diag["stats"]["variance"].as_f64().unwrap();
    assert!((0.49..=0.51).contains(&var), "{var}");
}

#[test]
fn squeezed_grid_record_has_128_distinct_phases() {
    let dir = tempfile::tempdir().unwrap();
    let ds = simulate(
        dir.path(),
        "sq",
        r#"{"seed": 2, "state": {"kind": "squeezed_vacuum", "r": 0.5, "phi": 0.0}, "schedule": {"kind": "grid", "d": 128}, "n_samples": 12800}"#,
    );
    let thetas: BTreeSet<u64> = std::fs::read_to_string(ds)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["theta"].as_f64().unwrap().to_bits())
        .collect();
    assert_eq!(thetas.len(), 128);
}

#[test]
fn same_seed_gives_identical_bytes_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"seed": 4, "state": {"kind": "thermal", "nbar": 1.0}, "n_samples": 5000}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--config", path(&cfg), "--out", path(&a), "--threads", "1"]);
    ok(&["simulate", "--config", path(&cfg), "--out", path(&b), "--threads", "3"]);
    for f in ["dataset.jsonl", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&["simulate", "--config", path(&cfg), "--out", path(&c), "--seed", "5"]);
    assert_ne!(std::fs::read(a.join("dataset.jsonl")).unwrap(), std::fs::read(c.join("dataset.jsonl")).unwrap());
}

#[test]
fn vacuum_reconstruction_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"seed": 8, "state": {{"kind": "vacuum"}}, "schedule": {{"kind": "grid", "d": 64, "span": {HALF_TURN}}}, "n_samples": 200000}}"#);
    let ds = simulate(dir.path(), "vac", &cfg);
    let out = dir.path().join("rec");
    ok(&["reconstruct", path(&ds), "--out", path(&out)]);
    let report = json_file(&out.join("report.json"));
    assert!(report["radon"]["rho00"].as_f64().unwrap() >= 0.98, "{report}");
    assert!(report["pattern"]["rho00"].as_f64().unwrap() >= 0.98, "{report}");
    for f in ["wigner.csv", "rho.json", "pn.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_to_string(out.join("wigner.csv")).unwrap().starts_with("q,p,w\n"));
    let rho = json_file(&out.join("rho.json"));
    assert_eq!(rho["errors"].as_array().unwrap().len(), rho["dim"].as_u64().unwrap() as usize);
}

#[test]
fn too_few_phases_are_refused_with_the_phase_count_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"seed": 1, "state": {{"kind": "coherent", "alpha": [1.0, 0.0]}}, "schedule": {{"kind": "grid", "d": 2, "span": {HALF_TURN}}}, "n_samples": 4000}}"#);
    let ds = simulate(dir.path(), "d2", &cfg);
    let out = ohtlab(&["reconstruct", path(&ds), "--method", "pattern", "--n-max", "5", "--out", path(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("n_max+1 = 6"), "{msg}");
}

#[test]
fn lossy_fock_one_reports_significant_negativity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"seed": 3, "state": {{"kind": "fock", "n": 1}}, "detector": {{"eta_q": 0.55, "eta_ls": 1.0, "lo_mean_photons": 1e6, "sigma_e": 0.0}},
            "schedule": {{"kind": "grid", "d": 64, "span": {HALF_TURN}}}, "n_samples": 200000}}"#
    );
    let ds = simulate(dir.path(), "f1", &cfg);
    let out = dir.path().join("rec");
    ok(&["reconstruct", path(&ds), "--method", "radon", "--bootstrap", "30", "--out", path(&out), "--format", "json"]);
    let report = json_file(&out.join("report.json"));
    assert_eq!(report["radon"]["w00_negative_at_3sigma"], true, "{report}");
    assert!(!out.join("wigner.csv").exists());
}

#[test]
fn moments_of_coherent_thermal_and_vacuum_records() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("coh", r#"{"kind": "coherent", "alpha": [1.0, 0.0]}"#),
        ("th", r#"{"kind": "thermal", "nbar": 1.0}"#),
        ("vac", r#"{"kind": "vacuum"}"#),
    ];
    let mut reports = Vec::new();
    for (name, state) in cases {
        let ds = simulate(dir.path(), name, &format!(r#"{{"seed": 21, "state": {state}, "n_samples": 200000}}"#));
        let out = dir.path().join(format!("{name}_m"));
        ok(&["moments", path(&ds), "--out", path(&out)]);
        assert!(std::fs::read_to_string(out.join("moments.csv")).unwrap().starts_with("quantity,value,std_err\n"));
        reports.push(json_file(&out.join("moments.json")));
    }
    let g2 = |r: &Value| r["g2"]["value"].as_f64().unwrap();
    assert!((g2(&reports[0]) - 1.0).abs() <= 0.05, "{}", reports[0]);
    assert!((g2(&reports[1]) - 2.0).abs() <= 0.10, "{}", reports[1]);
    let n = reports[2]["mean_n"]["value"].as_f64().unwrap();
    let se = reports[2]["mean_n"]["std_err"].as_f64().unwrap();
    assert!(n.abs() <= 3.0 * se, "{n} ± {se}");
}

#[test]
fn validate_flags_truncation_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let ds = simulate(dir.path(), "v", r#"{"seed": 1, "state": {"kind": "vacuum"}, "n_samples": 2000}"#);
    let text = std::fs::read_to_string(&ds).unwrap();

    let truncated = dir.path().join("truncated.jsonl");
    std::fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert_eq!(ohtlab(&["validate", path(&truncated)]).status.code(), Some(3));
    let cut_at_line = dir.path().join("short.jsonl");
    std::fs::write(&cut_at_line, text.lines().take(100).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(ohtlab(&["validate", path(&cut_at_line)]).status.code(), Some(3));

    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = r#"{"theta":0.0,"q":0.25}"#;
    std::fs::write(&ds, lines.join("\n") + "\n").unwrap();
    let out = ohtlab(&["validate", path(&ds)]);
    assert_eq!(out.status.code(), Some(3));
    let diag: Value = serde_json::from_slice(&out.stdout).unwrap();
    let checksum = diag["checks"].as_array().unwrap().iter().find(|c| c["name"] == "checksum").unwrap();
    assert_eq!(checksum["ok"], false);
    assert!(checksum["detail"].as_str().unwrap().contains("mismatch"));

    assert!(ohtlab(&["validate", path(&ds), "--report"]).status.success());
    let manifest = ds.parent().unwrap().join("manifest.json");
    assert_eq!(ohtlab(&["validate", path(&manifest)]).status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", "{\n  \"seed\": 1,\n  \"state\": {\"kind\": \"vacuum\"},\n  \"n_sample\": 10\n}");
    let out = ohtlab(&["simulate", "--config", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let nested = write_config(dir.path(), "nested.json", r#"{"state": {"kind": "vacuum", "extra": 1}, "n_samples": 10}"#);
    let out = ohtlab(&["simulate", "--config", path(&nested)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("state.extra"));
    let missing = write_config(dir.path(), "missing.json", r#"{"state": {"kind": "vacuum"}}"#);
    assert_eq!(ohtlab(&["simulate", "--config", path(&missing)]).status.code(), Some(2));
    let unphysical = write_config(dir.path(), "eta.json", r#"{"state": {"kind": "vacuum"}, "n_samples": 10, "detector": {"eta_q": 1.5, "eta_ls": 1.0, "lo_mean_photons": 1e6, "sigma_e": 0.0}}"#);
    assert_eq!(ohtlab(&["simulate", "--config", path(&unphysical), "--out", path(&dir.path().join("o"))]).status.code(), Some(2));
}

#[test]
fn auxiliary_pipelines_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, cmd: &str, body: &str, files: &[&str]| {
        let cfg = write_config(dir.path(), &format!("{name}.json"), body);
        let out = dir.path().join(name);
        ok(&[cmd, "--config", path(&cfg), "--out", path(&out)]);
        for f in files.iter().chain(&["manifest.json"]) {
            assert!(out.join(f).exists(), "{name}: {f}");
        }
        let diag: Value = serde_json::from_slice(&ok(&["validate", path(&out.join("manifest.json"))]).stdout).unwrap();
        assert_eq!(diag["ok"], true);
        out
    };
    let tm = run(
        "tm",
        "twomode",
        r#"{"seed": 5, "twomode": {"law": {"law": "independent_thermal", "nbar1": 1.0, "nbar2": 1.0}, "n_pulses": 5000}}"#,
        &["twomode.json", "twomode.csv", "run_a0.jsonl", "run_a45.jsonl", "run_a90.jsonl"],
    );
    assert!(json_file(&tm.join("twomode.json"))["result"]["g2"]["value"].as_f64().unwrap().is_finite());
    let ar = run(
        "ar",
        "array",
        r#"{"seed": 5, "detector": {"eta_q": 0.9, "eta_ls": 1.0, "lo_mean_photons": 1e6, "sigma_e": 0.0},
            "array": {"n_frames": 2000, "grid": {"n_pixels": 16, "pixel_area": 1.0},
                      "signals": [{"mode": {"kind": "hermite_gauss", "order": 0, "width": 3.0}, "state": {"kind": "thermal", "nbar": 5.0}}],
                      "spectral": {"config": {"m": 16, "j": 0, "lo_amplitudes": [[1000.0, 0.0]], "n_pulses": 500, "seed": 0},
                                   "signal": {"modes": []}, "pair": [3, 4], "bins": 4, "half_range": 4.0}}}"#,
        &["frames.jsonl", "optimal_mode.csv", "optimal_mode_quadratures.jsonl", "k_records.jsonl", "q_single.csv", "q_pair.csv", "array_report.json"],
    );
    assert!(ok(&["validate", path(&ar.join("frames.jsonl"))]).status.success());
    assert!(ok(&["validate", path(&ar.join("k_records.jsonl"))]).status.success());
    let tp = run(
        "tp",
        "sample",
        r#"{"temporal": {"axis": {"start": -409.6, "stop": 409.5, "n": 8192},
            "signal": {"kind": "chirped_pulse", "nu": 2.0, "width": 0.9, "chirp": 20.0},
            "sampling": {"gate": {"kind": "gaussian", "sigma": 2.0}, "omega_l": 2.0, "taus": {"start": -20.0, "stop": 20.0, "n": 401}},
            "recovery": {"bandwidth": 1.0, "nu": 2.0, "taus": {"start": -50.0, "stop": 50.0, "n": 1001}},
            "tfmap": {"gate": {"kind": "gaussian", "sigma": 4.0}, "omega": {"start": 1.0, "stop": 3.0, "n": 21}, "t": {"start": -30.0, "stop": 30.0, "n": 7}}}}"#,
        &["signal.csv", "sampled.csv", "recovered.csv", "tfmap.csv", "temporal_report.json"],
    );
    assert!(json_file(&tp.join("temporal_report.json"))["recovery_relative_rms"].as_f64().unwrap() <= 1e-3);
    let cal = run(
        "cal",
        "calibrate",
        r#"{"seed": 9, "detector": {"eta_q": 1.0, "eta_ls": 1.0, "lo_mean_photons": 1e6, "sigma_e": 300.0, "gain": 1e6},
            "calibration": {"lo_levels": [0, 1e6, 1e7, 1e8], "pulses_per_level": 2000, "balancing": {"n_tot": 1000000, "n_diff1": 100, "n_diff2": 100}}}"#,
        &["calibration.json", "calibration.csv"],
    );
    assert_eq!(json_file(&cal.join("calibration.json"))["balancing_precision"].as_f64(), Some(2e-4));
}

#[test]
fn missing_sections_and_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["twomode", "array", "sample", "calibrate", "simulate"] {
        assert_eq!(ohtlab(&[cmd, "--out", path(&dir.path().join(cmd))]).status.code(), Some(2), "{cmd}");
    }
    assert_eq!(ohtlab(&["moments", path(&dir.path().join("absent.jsonl"))]).status.code(), Some(3));
}
