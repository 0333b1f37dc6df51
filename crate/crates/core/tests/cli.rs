//! End-to-end CLI tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_faircontrast"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_dataset(path: &Path, n: usize, seed: u64, corrupt_rate: f64) {
    run_ok(&[
        "gen-data",
        "--n",
        &n.to_string(),
        "--dims",
        "16,12",
        "--latent",
        "4",
        "--groups",
        "race=3:0.08,0.15,0.77",
        "--bias",
        "race=1.0,1.3,1.6:0.0,-0.2,0.2",
        "--base-noise",
        "0.2",
        "--corrupt-rate",
        &corrupt_rate.to_string(),
        "--seed",
        &seed.to_string(),
        "--model-seed",
        "42",
        "--out",
        path.to_str().unwrap(),
    ]);
}

#[test]
fn gen_data_is_deterministic_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");

    let out = bin()
        .args([
            "gen-data", "--n", "100", "--dims", "8,6", "--latent", "3",
            "--groups", "g=2:0.5,0.5", "--corrupt-rate", "0", "--seed", "7",
            "--out", a.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("corrupted: 0"), "{stdout}");

    run_ok(&[
        "gen-data", "--n", "100", "--dims", "8,6", "--latent", "3",
        "--groups", "g=2:0.5,0.5", "--corrupt-rate", "0", "--seed", "7",
        "--out", b.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn gen_data_group_proportions_near_target() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("races.jsonl");
    gen_dataset(&path, 2000, 11, 0.0);
    let set = faircontrast::dataset::load_jsonl(&path).unwrap();
    let mut counts = [0f64; 3];
    for s in &set.samples {
        counts[s.attrs["race"] as usize] += 1.0;
    }
    for (count, p) in counts.iter().zip([0.08f64, 0.15, 0.77]) {
        let expected = 2000.0 * p;
        let sigma: f64 = (2000.0 * p * (1.0 - p)).sqrt();
        assert!(
            (count - expected).abs() <= 4.0 * sigma,
            "count {count} vs expected {expected}"
        );
    }
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin()
        .args(["gen-data", "--frobnicate", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    gen_dataset(&train, 64, 1, 0.0);
    // attribute that does not exist in the dataset
    let out = bin()
        .args([
            "train",
            "--train", train.to_str().unwrap(),
            "--val", train.to_str().unwrap(),
            "--out", dir.path().join("run").to_str().unwrap(),
            "--epochs", "1",
            "--batch-size", "16",
            "--embed-dim", "4",
            "--attr", "nonexistent",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_without_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    gen_dataset(&data, 64, 1, 0.0);
    let out = bin()
        .args([
            "eval",
            "--run", dir.path().join("nope").to_str().unwrap(),
            "--test", data.to_str().unwrap(),
            "--train", data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_report_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let val = dir.path().join("val.jsonl");
    let test = dir.path().join("test.jsonl");
    gen_dataset(&train, 512, 21, 0.05);
    gen_dataset(&val, 96, 22, 0.0);
    gen_dataset(&test, 128, 23, 0.0);
    let run = dir.path().join("run");

    run_ok(&[
        "train",
        "--train", train.to_str().unwrap(),
        "--val", val.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
        "--epochs", "2",
        "--batch-size", "32",
        "--embed-dim", "4",
        "--lr", "1e-3",
        "--eps", "1e-2",
        "--attr", "race",
        "--seed", "3",
    ]);

    for file in ["config.json", "curves.jsonl", "dbpm_audit.jsonl", "best.json"] {
        assert!(run.join(file).is_file(), "missing {file}");
    }
    assert!(run.join("checkpoints/epoch_1.json").is_file());
    assert!(run.join("checkpoints/epoch_2.json").is_file());

    let curves = std::fs::read_to_string(run.join("curves.jsonl")).unwrap();
    assert_eq!(curves.lines().count(), 2);

    run_ok(&[
        "eval",
        "--run", run.to_str().unwrap(),
        "--test", test.to_str().unwrap(),
        "--train", train.to_str().unwrap(),
    ]);
    assert!(run.join("reports/attr_race.json").is_file());

    // report is idempotent byte for byte
    run_ok(&["report", "--run", run.to_str().unwrap()]);
    let first = std::fs::read(run.join("report.md")).unwrap();
    run_ok(&["report", "--run", run.to_str().unwrap()]);
    let second = std::fs::read(run.join("report.md")).unwrap();
    assert_eq!(first, second);

    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("| Model | DPD ↓ | DEOdds ↓ | AUC ↑ | ES-AUC ↑ |"), "{text}");
}

#[test]
fn baseline_without_dbpm_and_fairness_logs_identities() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let val = dir.path().join("val.jsonl");
    gen_dataset(&train, 128, 5, 0.0);
    gen_dataset(&val, 64, 6, 0.0);
    let run = dir.path().join("run");

    run_ok(&[
        "train",
        "--train", train.to_str().unwrap(),
        "--val", val.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
        "--epochs", "2",
        "--batch-size", "32",
        "--embed-dim", "4",
        "--lr", "1e-3",
        "--attr", "race",
        "--no-dbpm",
        "--no-fairness",
    ]);
    let curves = std::fs::read_to_string(run.join("curves.jsonl")).unwrap();
    for line in curves.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["l1_mean"], v["l2_mean"]);
        assert_eq!(v["fairness_mean"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn sweep_runs_four_cells_and_baseline_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let val = dir.path().join("val.jsonl");
    gen_dataset(&train, 128, 31, 0.0);
    gen_dataset(&val, 64, 32, 0.0);
    let sweep = dir.path().join("sweep");

    run_ok(&[
        "sweep",
        "--train", train.to_str().unwrap(),
        "--val", val.to_str().unwrap(),
        "--out", sweep.to_str().unwrap(),
        "--epochs", "2",
        "--batch-size", "32",
        "--embed-dim", "4",
        "--lr", "1e-3",
        "--eps", "1e-2",
        "--attr", "race",
        "--seed", "9",
    ]);
    for cell in ["baseline", "robust", "fair", "robust_fair"] {
        assert!(sweep.join(format!("cell_{cell}/curves.jsonl")).is_file());
    }
    assert!(sweep.join("sweep.md").is_file());

    // cell (off, off) reproduces the standalone baseline run byte for byte
    let solo = dir.path().join("solo");
    run_ok(&[
        "train",
        "--train", train.to_str().unwrap(),
        "--val", val.to_str().unwrap(),
        "--out", solo.to_str().unwrap(),
        "--epochs", "2",
        "--batch-size", "32",
        "--embed-dim", "4",
        "--lr", "1e-3",
        "--eps", "1e-2",
        "--attr", "race",
        "--seed", "9",
        "--no-dbpm",
        "--no-fairness",
    ]);
    for file in ["curves.jsonl", "dbpm_audit.jsonl", "best.json"] {
        assert_eq!(
            std::fs::read(solo.join(file)).unwrap(),
            std::fs::read(sweep.join("cell_baseline").join(file)).unwrap(),
            "{file} differs between sweep cell and standalone run"
        );
    }
    // config matches after dropping the timestamp field
    let strip = |p: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("created_unix");
        v
    };
    assert_eq!(
        strip(&solo.join("config.json")),
        strip(&sweep.join("cell_baseline/config.json"))
    );

    // epoch-1 curves agree across every cell (mining is inert in epoch 1
    // and the fairness term only adds a lambda-scaled gradient)
    let epoch1_l1 = |p: &Path| -> f64 {
        let line = std::fs::read_to_string(p).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        v["l1_mean"].as_f64().unwrap()
    };
    let baseline_l1 = epoch1_l1(&sweep.join("cell_baseline/curves.jsonl"));
    let robust_l1 = epoch1_l1(&sweep.join("cell_robust/curves.jsonl"));
    assert_eq!(baseline_l1, robust_l1);
    let fair_l1 = epoch1_l1(&sweep.join("cell_fair/curves.jsonl"));
    let robust_fair_l1 = epoch1_l1(&sweep.join("cell_robust_fair/curves.jsonl"));
    assert_eq!(fair_l1, robust_fair_l1);
}

#[test]
fn help_lists_training_defaults() {
    let out = bin().args(["train", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--epochs", "--batch-size", "--lr", "--lambda", "--eps", "--alpha",
        "--beta", "--no-dbpm", "--no-fairness", "--attr", "--seed",
    ] {
        assert!(text.contains(flag), "missing {flag} in help:\n{text}");
    }
    for default in ["10", "32", "1e-5", "1e-7", "1e-4", "3"] {
        assert!(text.contains(default), "missing default {default}");
    }
}
