use std::process::Command;

use ncg_core::campaign::{run_campaign, CampaignConfig, CampaignReport};

const CONFIG: &str = r#"{"checks": [
    {"check": "first-order", "theta": 1.0, "count": 5, "window": 12, "guard": 8, "seed": 42},
    {"check": "real-structure", "count": 5, "seed": 7},
    {"check": "module-decomposition", "count": 50, "seed": 3},
    {"check": "embedding-homomorphism", "count": 100, "seed": 3},
    {"check": "dixmier-functionals", "count": 100, "lambda_max": 1e4, "seed": 9},
    {"check": "circle-identity", "fold": 5, "grid": 1024}
]}"#;

#[test]
fn reports_are_identical_modulo_timings() {
    let config = CampaignConfig::from_json(CONFIG).unwrap();
    let a = run_campaign(&config, Some(1)).unwrap().without_timings().to_json();
    let b = run_campaign(&config, Some(4)).unwrap().without_timings().to_json();
    assert_eq!(a, b);
    assert!(a.contains("\"pass\": true"));
}

#[test]
fn cli_reports_are_byte_identical_modulo_timings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, CONFIG).unwrap();
    let run = |workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_ncg"))
            .args(["run", path.to_str().unwrap()])
            .env("NCG_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let report: CampaignReport = serde_json::from_slice(&out.stdout).unwrap();
        report.without_timings().to_json()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn different_seeds_change_random_checks() {
    let a = CampaignConfig::from_json(r#"{"checks": [{"check": "first-order", "count": 3, "window": 12, "guard": 8, "seed": 1}]}"#)
        .unwrap();
    let b = CampaignConfig::from_json(r#"{"checks": [{"check": "first-order", "count": 3, "window": 12, "guard": 8, "seed": 2}]}"#)
        .unwrap();
    let ra = run_campaign(&a, Some(1)).unwrap();
    let rb = run_campaign(&b, Some(1)).unwrap();
    assert_ne!(ra.checks[0].reports[0].residual, rb.checks[0].reports[0].residual);
}
