//! CLI behavior: exit codes, config precedence, format handling, and the
//! stdout/stderr split.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_envelopes"));
    // Tests control the seed explicitly; scrub the ambient default.
    cmd.env_remove("ENVELOPES_SEED");
    cmd
}

fn tmp_file(name: &str, contents: &str) -> std::path::PathBuf {
    let path = std::env::temp_dir().join(format!("envelopes-test-{}-{name}", std::process::id()));
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    path
}

#[test]
fn stdout_is_machine_clean_json() {
    let out = bin().args(["envelope-naive", "--alpha", "8"]).output().unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["body"]["report"]["e_other"].as_f64(), Some(10.0));
    // The human summary goes to stderr only.
    assert!(!out.stderr.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("envelope-naive"));
}

#[test]
fn domain_errors_exit_one_with_diagnostic() {
    let out = bin().args(["envelope-naive", "--alpha=-5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    // Off-grid alpha names its neighbors.
    let out = bin().args(["envelope-bayes", "--alpha", "2.1", "--grid-n", "480"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(msg.contains("off-grid") && msg.contains("nearest"), "{msg}");
}

#[test]
fn usage_errors_exit_two() {
    let out = bin().args(["no-such-subcommand"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["stpetersburg", "--format", "csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["stpetersburg", "--criterion", "vibes"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = tmp_file("bad.toml", "not even toml = = =");
    let out = bin()
        .args(["envelope-naive", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_file(cfg).ok();
}

#[test]
fn precedence_flag_beats_file_beats_env() {
    let cfg = tmp_file("seed.toml", "seed = 5\n");

    // File beats env.
    let out = bin()
        .args(["envelope-lln", "--trials", "10", "--config", cfg.to_str().unwrap()])
        .env("ENVELOPES_SEED", "1")
        .output()
        .unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["body"]["config"]["seed"].as_u64(), Some(5));

    // Flag beats file.
    let out = bin()
        .args([
            "envelope-lln",
            "--trials",
            "10",
            "--seed",
            "9",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["body"]["config"]["seed"].as_u64(), Some(9));

    // Env fills the default when neither flag nor file sets it.
    let out = bin()
        .args(["envelope-lln", "--trials", "10"])
        .env("ENVELOPES_SEED", "77")
        .output()
        .unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["body"]["config"]["seed"].as_u64(), Some(77));

    std::fs::remove_file(cfg).ok();
}

#[test]
fn format_inferred_from_output_extension() {
    let path = std::env::temp_dir().join(format!("envelopes-{}.csv", std::process::id()));
    let out = bin()
        .args([
            "envelope-lln",
            "--trials",
            "50",
            "--seed",
            "1",
            "--output",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# version:"));
    assert!(lines.next().unwrap().starts_with("# config:"));
    assert_eq!(lines.next(), Some("n,avg_you,avg_host"));
    // Data rows parse as CSV after the comment header.
    let data = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut rdr = csv::Reader::from_reader(data.as_bytes());
    assert_eq!(rdr.records().count(), 50);
    std::fs::remove_file(path).ok();
}

#[test]
fn lln_csv_final_row_matches_json_summary() {
    let args = ["envelope-lln", "--v1", "10", "--v2", "20", "--trials", "3000", "--seed", "4"];
    let json = bin().args(args).output().unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let final_you = doc["body"]["report"]["final_avg_you"].as_f64().unwrap();

    let csv_out = bin().args(args).args(["--format", "csv"]).output().unwrap();
    let text = String::from_utf8(csv_out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    assert_eq!(cols[0], "3000");
    let csv_you: f64 = cols[1].parse().unwrap();
    assert_eq!(csv_you, final_you);
}

#[test]
fn stp_probability_criterion_report() {
    let out = bin()
        .args(["stpetersburg", "--k-max", "10", "--criterion", "probability", "--m", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let report = &doc["body"]["report"];
    assert_eq!(report["prob_other_greater_exact"].as_f64(), Some(0.125));
    assert_eq!(report["k_max"].as_u64(), Some(10));
    assert!(report["prob_other_greater_truncated"].as_f64().unwrap() < 0.125);
    assert_eq!(report["divergence_flag"].as_bool(), Some(true));
}

#[test]
fn stp_pin_labels_show_in_experiment() {
    let out = bin()
        .args(["stpetersburg", "--k-max", "6", "--trials", "2000", "--pin-labels", "--seed", "2"])
        .output()
        .unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["body"]["report"]["labeling"].as_str(), Some("pins"));
    let strata = doc["body"]["report"]["experiment"]["strata"].as_array().unwrap();
    assert!(strata[0]["label"].as_str().unwrap().contains("pin P1"));
}
