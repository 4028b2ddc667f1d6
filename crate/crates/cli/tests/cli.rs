use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dcsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcsi")).args(args).env_remove("DCSI_SEED").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// CSV rows without the provenance comment and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn dof_totals(args: &[&str]) -> Vec<(String, f64)> {
    let mut full = vec!["dof", "--format", "csv"];
    full.extend_from_slice(args);
    rows(&stdout(&dcsi(&full))).into_iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect()
}

#[test]
fn reference_dof_table() {
    let out = stdout(&dcsi(&["repro", "appD", "--format", "csv"]));
    let totals: Vec<f64> = rows(&out).iter().map(|r| r[1].parse().unwrap()).collect();
    // czf, bzf, apzf, czf-hq, apzf-hq
    assert_eq!(totals, vec![0.0, 0.0, 2.1, 5.3, 6.3]);
}

#[test]
fn two_user_dof_table() {
    let t = dof_totals(&["--alpha", "1,0.5;0,0.7"]);
    let get = |s: &str| t.iter().find(|(n, _)| n == s).unwrap().1;
    assert_eq!(get("czf"), 0.0);
    assert_eq!(get("apzf"), 1.7);
    assert_eq!(get("bzf"), 0.5);
    assert_eq!(get("czf-hq"), 0.5);
}

#[test]
fn full_quality_gives_k_everywhere() {
    for (_, v) in dof_totals(&["--alpha", "1,1,1;1,1,1;1,1,1"]) {
        assert_eq!(v, 3.0);
    }
}

#[test]
fn apzf_allocation_dominates() {
    let out = stdout(&dcsi(&["alloc", "--scheme", "czf,apzf", "--gamma", "0:0.5:40"]));
    let rows = rows(&out);
    let czf: Vec<f64> = rows.iter().filter(|r| r[1] == "czf").map(|r| r[4].parse().unwrap()).collect();
    let apzf: Vec<f64> = rows.iter().filter(|r| r[1] == "apzf").map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(czf.len(), 81);
    assert_eq!(apzf.len(), 81);
    assert!(czf.iter().zip(&apzf).all(|(c, a)| a >= c));
    assert_eq!(stdout(&dcsi(&["repro", "fig4"])), out);
}

#[test]
fn exit_codes() {
    assert_eq!(dcsi(&["alloc", "--gamma", "4:1:0"]).status.code(), Some(2));
    assert_eq!(dcsi(&["alloc", "--gamma", ""]).status.code(), Some(2));
    assert_eq!(dcsi(&["dof", "--alpha", "1,2;3"]).status.code(), Some(2));
    assert_eq!(dcsi(&["dof", "--alpha", "1,x;0,1"]).status.code(), Some(2));
    assert_eq!(dcsi(&["rate", "--snr", "0:10:20"]).status.code(), Some(2));
    assert_eq!(dcsi(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dcsi(&["quantcheck", "--bits", "21", "--trials", "10"]).status.code(), Some(3));
}

#[test]
fn failed_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = dcsi(&[
        "rate",
        "--bits",
        "24,1;1,1",
        "--model",
        "rvq",
        "--snr",
        "10",
        "--trials",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

fn run_to(path: &Path, extra: &[&str], env_seed: Option<&str>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcsi"));
    cmd.args(["rate", "--alpha", "1,0.5;0,0.7", "--snr", "0:20:60", "--trials", "64", "--format", "json"])
        .args(extra)
        .args(["--out", path.to_str().unwrap()])
        .env_remove("DCSI_SEED");
    if let Some(s) = env_seed {
        cmd.env("DCSI_SEED", s);
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    run_to(&p("a.json"), &["--seed", "7", "--threads", "1"], None);
    run_to(&p("b.json"), &["--threads", "3"], Some("7"));
    run_to(&p("c.json"), &["--seed", "8"], None);
    let read = |n: &str| std::fs::read_to_string(p(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));

    let doc: Value = serde_json::from_str(&read("a.json")).unwrap();
    assert_eq!(doc["provenance"]["seed"], 7);
    assert_eq!(doc["provenance"]["spec_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(doc["spec"]["command"], "rate");
    // apzf is undefined at 0 dB.
    assert!(doc["result"][2]["sum_rate"][0].is_null());

    // Replaying the embedded spec reproduces the file.
    let replay = dcsi(&["rate", "--config", p("a.json").to_str().unwrap(), "--format", "json"]);
    assert_eq!(stdout(&replay), read("a.json"));
}

#[test]
fn config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha": "1,1,1;1,1,1;1,1,1", "schemes": ["czf"]}"#).unwrap();
    let t = dof_totals(&["--alpha", "0,0;0,0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(t, vec![("czf".to_string(), 3.0)]);
    std::fs::write(&cfg, r#"{"command": "alloc"}"#).unwrap();
    assert_eq!(dcsi(&["dof", "--alpha", "1,1;1,1", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn quantized_rate_csv() {
    let out = stdout(&dcsi(&[
        "rate",
        "--bits",
        "6,3;3,6",
        "--model",
        "rvq",
        "--snr",
        "0:20:40",
        "--trials",
        "40",
        "--schemes",
        "czf,apzf-qpower:3",
    ]));
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("# dcsi "));
    assert_eq!(
        lines.next().unwrap(),
        "scheme,snr_db,rate_user_1,rate_user_2,sum_rate,leakage_user_1,leakage_user_2,stderr_user_1,stderr_user_2,stderr_sum"
    );
    let rows = rows(&out);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn quantcheck_cells() {
    let out = stdout(&dcsi(&["quantcheck", "--k", "2,3", "--bits", "0,8,12", "--trials", "20000", "--format", "json"]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    let cells = doc["result"].as_array().unwrap();
    assert_eq!(cells.len(), 6);
    let cell = |k: u64, b: u64| cells.iter().find(|c| c["k"] == k && c["bits"] == b).unwrap();
    assert_eq!(cell(2, 0)["status"], "INFO");
    assert_eq!(cell(2, 8)["status"], "PASS");
    assert_eq!(cell(3, 12)["status"], "PASS");
    let lo = cell(3, 12)["bounds"]["log_lower"].as_f64().unwrap();
    assert!((lo - (12.0 + 0.375f64.log2()) / 2.0).abs() < 1e-12);
}
