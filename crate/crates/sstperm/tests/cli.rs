//! End-to-end checks of the binary: exit codes, output formats, seed
//! precedence, and the mask round trip.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sstperm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("SSTPERM_SEED").output().expect("spawn sstperm")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["nosuchcmd"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--kind", "ctrt"]);
    assert_eq!(out.status.code(), Some(2), "missing required args");
    let out = run(&["shuffle", "--key-hex", "00", "--system-random"]);
    assert_eq!(out.status.code(), Some(2), "conflicting key sources");
}

#[test]
fn domain_errors_exit_one() {
    let out = run(&["simulate", "--kind", "t2r", "--rule", "klz", "--n", "8"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not a strong stationary time"));

    let out = run(&["plan", "--n", "256", "--epsilon", "0.5"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["shuffle", "--key-hex", "zz"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("hex"));
}

#[test]
fn plan_prints_the_round_budget() {
    let out = run(&["plan", "--n", "4", "--epsilon", "0.01"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "26");

    let out = run(&["plan", "--n", "2", "--epsilon", "0.4"]);
    assert_eq!(stdout(&out).trim(), "9");
}

#[test]
fn shuffle_is_reproducible_and_seed_sources_agree() {
    let flag = run(&["shuffle", "--n", "8", "--seed", "42"]);
    assert!(flag.status.success());
    let again = run(&["shuffle", "--n", "8", "--seed", "42"]);
    assert_eq!(stdout(&flag), stdout(&again));

    let env = bin()
        .args(["shuffle", "--n", "8"])
        .env("SSTPERM_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(stdout(&flag), stdout(&env));

    // The line parses back into a deck of the right size.
    let line = stdout(&flag);
    let labels: Vec<u32> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
    let mut sorted = labels.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..8).collect::<Vec<u32>>());

    let other = run(&["shuffle", "--n", "8", "--seed", "43"]);
    assert_ne!(stdout(&flag), stdout(&other));
}

#[test]
fn config_file_supplies_the_seed_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sstperm.toml");
    std::fs::write(&cfg, "seed = 42\nworkers = 2\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = run(&["--config", cfg, "shuffle", "--n", "8"]);
    let from_flag = run(&["shuffle", "--n", "8", "--seed", "42"]);
    assert_eq!(stdout(&from_file), stdout(&from_flag));

    let overridden = run(&["--config", cfg, "shuffle", "--n", "8", "--seed", "7"]);
    let direct = run(&["shuffle", "--n", "8", "--seed", "7"]);
    assert_eq!(stdout(&overridden), stdout(&direct));
    assert_ne!(stdout(&overridden), stdout(&from_file));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 1\n").unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "plan", "--n", "4", "--epsilon", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown field"));
}

#[test]
fn shuffle_key_hex_matches_seed_key() {
    // The default key is the 8 little-endian seed bytes.
    let seeded = run(&["shuffle", "--n", "16", "--scheme", "ctrt-klz", "--seed", "5"]);
    let keyed = run(&[
        "shuffle", "--n", "16", "--scheme", "ctrt-klz", "--key-hex", "0500000000000000",
    ]);
    assert_eq!(stdout(&seeded), stdout(&keyed));
}

#[test]
fn shuffle_json_carries_the_run_record() {
    let out = run(&["shuffle", "--n", "8", "--seed", "3", "--emit", "json", "--min-steps", "40"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["deck"].as_array().unwrap().len(), 8);
    assert_eq!(v["steps"], 40);
    assert_eq!(v["stopped_by"], "sst-rule");
    assert!(v["rule_stopped_at"].as_u64().unwrap() <= 40);
    assert_eq!(v["bits_used"], 40 * 8);
}

#[test]
fn advantage_prints_exact_tables() {
    let out = run(&["advantage", "--t", "0", "--t", "256", "--t", "512"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        [
            "k,p_plus,log2_advantage",
            "0,1.000000,-1.00000",
            "256,0.567138,-3.89672",
            "512,0.509015,-6.79344",
        ]
    );

    let out = run(&["advantage", "--t", "512", "--t", "1024", "--full-precision"]);
    let text = stdout(&out);
    assert!(text.contains("512,0.5090151026068046,-6.79344037265"));
    assert!(text.contains("1024,0.5001625441500224,-12.5868807453"));
}

#[test]
fn simulate_json_is_worker_invariant() {
    let base = ["simulate", "--kind", "ctrt", "--rule", "klz", "--n", "16", "--trials", "500"];
    let one = run(&[&base[..], &["--workers", "1"]].concat());
    assert!(one.status.success());
    let four = run(&[&base[..], &["--workers", "4"]].concat());
    assert_eq!(stdout(&one), stdout(&four));

    let v: serde_json::Value = serde_json::from_str(&stdout(&one)).unwrap();
    assert_eq!(v["trials"], 500);
    let hist = v["histogram"].as_object().unwrap();
    let mass: u64 = hist.values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(mass, 500);
    // Internal knobs stay out of the report.
    assert!(v.get("wall_time").is_none());
    assert!(v["config"].get("workers").is_none());
}

#[test]
fn simulate_csv_lists_the_histogram() {
    let out = run(&[
        "simulate", "--kind", "rtrt", "--rule", "mironov", "--n", "4", "--trials", "200",
        "--out", "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("steps,count"));
    let mass: u64 =
        lines.map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(mass, 200);
}

#[test]
fn oracle_gate_depends_on_deck_size() {
    let out = run(&["oracle", "--max-n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("oracle: all 24 checks passed"));
    assert!(!text.contains("FAIL"));

    // At four cards the two-phase marking rule is not conditionally uniform,
    // and the gate must say so and fail.
    let out = run(&["oracle"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("FAIL conditional-uniformity random-transpositions+klz-mark n=4"));
    assert!(text.contains("FAIL conditional-uniformity cyclic-to-random+klz-mark n=4"));
    assert!(text.contains("PASS separation-bound random-transpositions+klz-mark n=4"));
    assert!(text.contains("oracle: 2 of 48 checks failed"));
}

#[test]
fn mask_round_trips_files() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.bin");
    let cipher = dir.path().join("cipher.bin");
    let round = dir.path().join("round.bin");
    let data: Vec<u8> = (0..64u32).map(|i| (i * 37 + 5) as u8).collect();
    std::fs::write(&plain, &data).unwrap();

    let p = |path: &Path| path.to_str().unwrap().to_string();
    let out = run(&[
        "mask", "encrypt", "--key-hex", "8090a0b0", "--in", &p(&plain), "--out", &p(&cipher),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let encrypted = std::fs::read(&cipher).unwrap();
    assert_eq!(encrypted.len(), data.len());
    assert_ne!(encrypted, data);

    let out = run(&[
        "mask", "decrypt", "--key-hex", "8090a0b0", "--in", &p(&cipher), "--out", &p(&round),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&round).unwrap(), data);

    // Partial blocks are refused before anything is written.
    let odd = dir.path().join("odd.bin");
    std::fs::write(&odd, &data[..17]).unwrap();
    let out = run(&[
        "mask", "encrypt", "--key-hex", "8090a0b0", "--in", &p(&odd), "--out", &p(&cipher),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("whole number of 16-byte blocks"));

    // Other block widths work end to end.
    let out = run(&[
        "mask", "encrypt", "--key-hex", "8090a0b0", "--in", &p(&plain), "--out", &p(&cipher),
        "--block-bits", "256", "--transform", "identity",
    ]);
    assert!(out.status.success());
    let out = run(&[
        "mask", "decrypt", "--key-hex", "8090a0b0", "--in", &p(&cipher), "--out", &p(&round),
        "--block-bits", "256", "--transform", "identity",
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&round).unwrap(), data);
}
