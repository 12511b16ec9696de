use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use pc_extrap::config::sha256_hex;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn pc_extrap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pc-extrap")).args(args).output().expect("binary runs")
}

fn run(workflow: &str, cfg: &Path, extra: &[&str]) -> (i32, Value) {
    let mut args = vec![workflow, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = pc_extrap(&args);
    let report: Value = serde_json::from_slice(&out.stdout).expect("report is JSON");
    (out.status.code().unwrap(), report)
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

#[test]
fn estimate_reproduces_worked_example() {
    let path = config("example1.json");
    let (code, r) = run("estimate", &path, &[]);
    assert_eq!(code, 0);
    assert_eq!(r["tool"], "pc-extrap");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config_sha256"], sha256_hex(&std::fs::read(&path).unwrap()));
    assert_eq!(r["status"], "ok");
    assert!((num(&r["result"]["delta"]) - 2.0).abs() < 1e-8);
    let uw = r["result"]["univariate_weights"].as_array().unwrap();
    assert_eq!(uw.len(), 1);
    assert_eq!(uw[0]["time"], 0);
    assert!((num(&uw[0]["coefficient"][0]) - 1.0).abs() < 1e-8);
    let c = r["result"]["c"].as_array().unwrap();
    assert_eq!(c[0]["index"], -2);
}

#[test]
fn estimate_trivial_configs() {
    let (code, r) = run("estimate", &config("white_noise.json"), &[]);
    assert_eq!(code, 0);
    assert!((num(&r["result"]["delta"]) - 2.0).abs() < 1e-12);
    let (code, r) = run("estimate", &config("zero_functional.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(num(&r["result"]["delta"]), 0.0);
}

#[test]
fn oracle_check_verdicts() {
    let (code, r) = run("oracle-check", &config("white_noise.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(num(&r["result"]["relative_gap"]), 0.0);
    assert_eq!(r["result"]["verdict"], "PASS");

    let (code, r) = run("oracle-check", &config("surrogate_q09.json"), &[]);
    assert_eq!(code, 0);
    assert!(num(&r["result"]["relative_gap"]) < 1e-4);
    let windows: Vec<u64> =
        r["result"]["windows"].as_array().unwrap().iter().map(|w| w["window"].as_u64().unwrap()).collect();
    assert_eq!(windows, vec![8, 16, 32, 64, 128]);

    let (code, r) = run("oracle-check", &config("short_truncation.json"), &[]);
    assert_eq!(code, 1);
    assert_eq!(r["status"], "fail");
    assert_eq!(r["result"]["verdict"], "FAIL");
    assert_eq!(r["result"]["truncation_flag"], true);
}

#[test]
fn truncation_flag_overrides_the_config() {
    let (code, r) = run("oracle-check", &config("short_truncation.json"), &["--truncation", "64"]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["result"]["verdict"], "PASS");
}

#[test]
fn simulate_is_deterministic_and_exports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("surrogate_q09.json");
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let csv = dir.path().join("path.csv");
        let o = pc_extrap(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "5000",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["result"]["seed"], 11);
    assert_eq!(r["result"]["estimate"]["trials"], 5000);
    assert!(num(&r["result"]["z_score"]).abs() <= 3.0);

    let text = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,zeta,theta"));
    // window -1..0 of blocks of two
    assert_eq!(lines.count(), 4);
}

#[test]
fn simulate_zero_functional_has_zero_error() {
    let (code, r) = run("simulate", &config("zero_functional.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(num(&r["result"]["estimate"]["mean"]), 0.0);
}

#[test]
fn different_seeds_give_different_reports() {
    let cfg = config("surrogate_q09.json");
    let (_, a) = run("simulate", &cfg, &["--trials", "1000", "--seed", "1"]);
    let (_, b) = run("simulate", &cfg, &["--trials", "1000", "--seed", "2"]);
    assert_ne!(a["result"]["estimate"]["mean"], b["result"]["estimate"]["mean"]);
}

#[test]
fn minimax_is_certified() {
    let (code, r) = run("minimax", &config("minimax_d02.json"), &[]);
    assert_eq!(code, 0);
    let res = &r["result"];
    assert_eq!(res["variant"], "D0_2");
    assert!((num(&res["delta0"]) - 1.0).abs() < 1e-8);
    assert_eq!(res["certificate"]["verdict"], "PASS");
    assert_eq!(res["certificate"]["samples"], 100);
    assert!(num(&res["signal_relation"]["max_relative"]) < 1e-3);
    assert!(res["signal_relation"]["multiplier"]["scalar"].is_number());
    assert_eq!(res["f0"]["coeffs"][0]["lag"], 0);
}

#[test]
fn minimax_with_noise_band_reports_bound_multipliers() {
    let (code, r) = run("minimax", &config("minimax_noisy_band.json"), &[]);
    assert_eq!(code, 0);
    let noise = &r["result"]["noise_relation"];
    assert!(noise["bounds"]["scalar"]["lower"].is_array());
    assert!(r["result"]["g0"].is_object());
}

#[test]
fn singleton_class_matches_direct_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singleton.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "period": 2,
            "pattern": {"N": [1], "K": [1]},
            "functional": {"base": [[1, 0], [0.5, -0.2]]},
            "minimax": {"variant": "D0_1", "P": [[1.5, 0], [0.2, 0.1], [0.2, -0.1], [1.0, 0]], "degree": 0, "samples": 10}}"#,
    )
    .unwrap();
    let direct = dir.path().join("direct.json");
    std::fs::write(
        &direct,
        r#"{"schema_version": 1, "period": 2,
            "f": {"kind": "density", "coeffs": [{"lag": 0, "entries": [[1.5, 0], [0.2, 0.1], [0.2, -0.1], [1.0, 0]]}]},
            "pattern": {"N": [1], "K": [1]},
            "functional": {"base": [[1, 0], [0.5, -0.2]]}}"#,
    )
    .unwrap();
    let (code, m) = run("minimax", &cfg, &[]);
    assert_eq!(code, 0);
    let (_, e) = run("estimate", &direct, &[]);
    assert!((num(&m["result"]["delta0"]) - num(&e["result"]["delta"])).abs() < 1e-10);
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let (code, r) = run("estimate", &config("vanishing_density.json"), &[]);
    assert_eq!(code, 2);
    assert_eq!(r["status"], "error");
    assert_eq!(r["result"]["kind"], "minimality");

    let (code, r) = run("oracle-check", &config("example1.json"), &[]);
    assert_eq!(code, 4);
    assert_eq!(r["result"]["kind"], "infinite_variance");
    assert!(r["result"]["hint"].as_str().unwrap().contains("inverse_density"));

    let (code, r) = run("minimax", &config("infeasible_class.json"), &[]);
    assert_eq!(code, 5);
    assert_eq!(r["result"]["kind"], "infeasible_class");
}

#[test]
fn ill_conditioning_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    let mut v: Value = serde_json::from_slice(&std::fs::read(config("zero_functional.json")).unwrap()).unwrap();
    v["functional"]["base"] = serde_json::json!([[1, 0]]);
    v["numeric"]["tolerances"] = serde_json::json!({"condition_limit": 1.0});
    std::fs::write(&cfg, serde_json::to_vec(&v).unwrap()).unwrap();
    let (code, r) = run("estimate", &cfg, &[]);
    assert_eq!(code, 3, "{r}");
    assert_eq!(r["result"]["kind"], "ill_conditioned");
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, br#"{"schema_version": 1, "period": 2, "functional": {"base": [[1, 0]]}}"#).unwrap();
    let (code, r) = run("estimate", &cfg, &[]);
    assert_eq!(code, 1);
    assert_eq!(r["result"]["kind"], "invalid_config");

    let missing = dir.path().join("missing.json");
    let (code, r) = run("estimate", &missing, &[]);
    assert_eq!(code, 1);
    assert_eq!(r["result"]["kind"], "io");

    std::fs::write(&cfg, b"{ not json").unwrap();
    let (code, r) = run("estimate", &cfg, &[]);
    assert_eq!(code, 1);
    assert_eq!(r["config_sha256"], sha256_hex(b"{ not json"));

    assert_eq!(pc_extrap(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pc_extrap(&["--help"]).status.code(), Some(0));
}
