use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stabent(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabent"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("STABENT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn moment_example_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("moment.json");
    let o = stabent(&["bound", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path(), "bound.json");
    assert_eq!(r["schema_version"], 1);
    let kappa = r["result"]["detail"]["kappa_star"].as_f64().unwrap();
    let value = r["result"]["report"]["value"].as_f64().unwrap();
    assert!((kappa - 3.0).abs() < 1e-3, "{kappa}");
    assert!((value - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6, "{value}");
}

#[test]
fn theorem_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("cocycle.json");
    let o = stabent(&["bound", "--theorem", "selgrade", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path(), "bound.json");
    assert_eq!(r["config"]["bound"]["theorem"], "selgrade");
    assert_eq!(r["result"]["report"]["theorem"], "selgrade");
    assert!(dir.path().join("cocycle.csv").exists());
}

#[test]
fn disjoint_intervals_both_selected() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabent(&["lemmas", "intervals", "--interval", "0,1", "--interval", "2,3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(dir.path(), "lemmas_intervals.json");
    assert_eq!(r["result"]["selected"], serde_json::json!([0, 1]));
    let csv = std::fs::read_to_string(dir.path().join("intervals.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,left,right,selected"));
}

#[test]
fn unknown_verb_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabent(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "bound": { "theorem": "linear", "matrx": [[2.0]] } }"#).unwrap();
    let o = stabent(&["bound", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("matrx"), "{}", stderr(&o));
}

#[test]
fn missing_section_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabent(&["ams", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ams"), "{}", stderr(&o));
}

#[test]
fn randomized_verb_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{ "channel": { "kind": "bsc", "p": 0.1 }, "coding": { "rates": [0.2], "blocklength": 20, "trials": 10 } }"#,
    )
    .unwrap();
    let o = stabent(&["channel", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn capability_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{ "model": { "map": { "kind": "additive", "drift": { "type": "linear", "matrix": [[2.0]] } },
                        "init": { "family": "uniform", "low": -1.0, "high": 1.0 } },
             "bound": { "theorem": "cocycle" } }"#,
    )
    .unwrap();
    let o = stabent(&["bound", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn dmc_from_csv_matches_inline_bsc() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "0.89,0.11\n0.11,0.89\n").unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{ "channel": { "kind": "dmc_csv", "path": "w.csv" } }"#).unwrap();
    let o = stabent(&["channel", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let c = report(dir.path(), "channel.json")["result"]["capacity"]["capacity"].as_f64().unwrap();
    let h = -(0.11f64 * 0.11f64.log2() + 0.89 * 0.89f64.log2());
    assert!((c - (1.0 - h)).abs() < 1e-6);
}

/// Re-running the config embedded in a report reproduces the report byte for byte.
fn round_trip(verb: &[&str], cfg: &str, seed: Option<&str>, report_name: &str, tables: &[&str]) {
    let first = tempfile::tempdir().unwrap();
    let cfg = configs().join(cfg);
    let mut args: Vec<&str> = verb.to_vec();
    args.extend(["--config", cfg.to_str().unwrap()]);
    if let Some(s) = seed {
        args.extend(["--seed", s]);
    }
    let o = stabent(&args, first.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(first.path(), report_name);
    if let Some(s) = seed {
        assert_eq!(r["seed"].to_string(), s);
    }
    let embedded = first.path().join("embedded.json");
    std::fs::write(&embedded, serde_json::to_string_pretty(&r["config"]).unwrap()).unwrap();

    let second = tempfile::tempdir().unwrap();
    let mut args: Vec<&str> = verb.to_vec();
    args.extend(["--config", embedded.to_str().unwrap()]);
    let o = stabent(&args, second.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in std::iter::once(&report_name).chain(tables) {
        let a = std::fs::read(first.path().join(name)).unwrap();
        let b = std::fs::read(second.path().join(name)).unwrap();
        assert!(a == b, "{name} differs after round trip");
    }
}

#[test]
fn round_trip_noisy_demo() {
    round_trip(
        &["noisy-demo"],
        "noisy_demo.json",
        Some("99"),
        "noisy_demo.json",
        &["exceedance.csv", "rate_error.csv"],
    );
}

#[test]
fn round_trip_simulate() {
    round_trip(&["simulate"], "ams.json", None, "simulate.json", &["trajectories.csv", "symbols.csv"]);
}

#[test]
fn round_trip_channel() {
    round_trip(&["channel"], "channel.json", Some("4"), "channel.json", &["coding.csv"]);
}

#[test]
fn round_trip_lemma_flags() {
    let first = tempfile::tempdir().unwrap();
    let o = stabent(&["lemmas", "rate", "--horizon", "64", "--r", "0.3"], first.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(first.path(), "lemmas_rate.json");
    assert_eq!(r["config"]["lemmas"]["rate"]["horizon"], 64);
    let embedded = first.path().join("embedded.json");
    std::fs::write(&embedded, r["config"].to_string()).unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = stabent(&["lemmas", "rate", "--config", embedded.to_str().unwrap()], second.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.path().join("lemmas_rate.json")).unwrap(),
        std::fs::read(second.path().join("lemmas_rate.json")).unwrap()
    );
}

#[test]
fn reproduce_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabent(&["reproduce"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"));
    assert_eq!(report(dir.path(), "reproduce.json")["result"]["failed"], 0);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stabent"))
        .args(["lemmas", "intervals", "--interval", "0,2"])
        .env("STABENT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("lemmas_intervals.json").exists());
}
