use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_maskdistill");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Acquire, filter and mask the fixture into `dir` with the given seed.
fn prepare(dir: &Path, seed: &str) {
    let conf = fixture("pipeline.conf");
    let raw = dir.join("raw.jsonl");
    let clean = dir.join("clean.jsonl");
    for args in [
        vec!["acquire", "--mock", "--out", s(&raw)],
        vec!["filter", "--dataset", s(&raw), "--out", s(&clean)],
        vec!["mask", "--dataset", s(&clean), "--out", s(&dir.join("masks.jsonl"))],
    ] {
        let mut full = vec!["--config", s(&conf), "--seed", seed];
        full.extend(args);
        let out = run(&full);
        assert!(out.status.success(), "{full:?}: {}", stderr(&out));
    }
}

#[test]
fn help_lists_every_flag() {
    let expected: [(&str, &[&str]); 5] = [
        (
            "acquire",
            &[
                "--templates",
                "--slots",
                "--out",
                "--mock",
                "--teacher-url",
                "--mutations",
                "--style-tag",
                "--concurrency",
            ],
        ),
        ("filter", &["--dataset", "--out", "--rejected", "--blocklist", "--min-tokens", "--max-tokens", "--report"]),
        ("mask", &["--dataset", "--out", "--vocab", "--weights", "--floor", "--threshold", "--dump-scores"]),
        ("train", &["--dataset", "--masks", "--vocab", "--out"]),
        ("eval", &["--checkpoint", "--dataset", "--masks", "--vocab", "--out"]),
    ];
    for (cmd, flags) in expected {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in flags.iter().chain(&["--config", "--seed", "--verbose"]) {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = run(&["mask", "--dataset", "x", "--out", "y", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--no-such-flag"));
}

#[test]
fn missing_slots_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let slots = dir.path().join("nowhere.jsonl");
    let out = run(&[
        "acquire",
        "--mock",
        "--templates",
        s(&fixture("templates.jsonl")),
        "--slots",
        s(&slots),
        "--out",
        s(&dir.path().join("raw.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(s(&slots)), "{}", stderr(&out));
}

#[test]
fn missing_config_file_is_an_error() {
    let out = run(&["--config", "/nonexistent/p.conf", "train", "--dataset", "a", "--masks", "b", "--out", "c"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/p.conf"));
}

#[test]
fn unreachable_teacher_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("p.conf");
    fs::write(
        &conf,
        format!(
            "templates = {}\nslots = {}\nretry_limit = 0\nteacher_url = http://127.0.0.1:9/complete\n",
            s(&fixture("templates.jsonl")),
            s(&fixture("slots.jsonl"))
        ),
    )
    .unwrap();
    let out = run(&["--config", s(&conf), "acquire", "--out", s(&dir.path().join("raw.jsonl"))]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("teacher unreachable"));
}

#[test]
fn stages_are_deterministic_and_seeded() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    prepare(a.path(), "3");
    prepare(b.path(), "3");
    prepare(c.path(), "4");
    for name in ["raw.jsonl", "clean.jsonl", "clean.rejected.jsonl", "masks.jsonl", "vocab.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_ne!(fs::read(a.path().join("masks.jsonl")).unwrap(), fs::read(c.path().join("masks.jsonl")).unwrap());
}

#[test]
fn mask_summary_and_threshold_override() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "1");
    let clean = dir.path().join("clean.jsonl");
    let scores = dir.path().join("scores.jsonl");
    let out = run(&[
        "mask",
        "--dataset",
        s(&clean),
        "--out",
        s(&dir.path().join("t.masks.jsonl")),
        "--threshold",
        "0.5",
        "--weights",
        "1,1,1,0",
        "--dump-scores",
        s(&scores),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["command"], "mask");
    assert_eq!(summary["examples"], 32);
    assert!(summary["unmasked"].as_u64().unwrap() < summary["tokens"].as_u64().unwrap());
    assert!(fs::read_to_string(&scores).unwrap().lines().count() > 0);

    let bad = run(&["mask", "--dataset", s(&clean), "--out", s(&dir.path().join("x")), "--weights", "1,2"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_on_empty_dataset_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.jsonl");
    fs::write(&data, "").unwrap();
    let masks = dir.path().join("masks.jsonl");
    let out = run(&["mask", "--dataset", s(&data), "--out", s(&masks)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["train", "--dataset", s(&data), "--masks", s(&masks), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("empty train split"), "{}", stderr(&out));
}

#[test]
fn mask_count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "1");
    let masks = dir.path().join("masks.jsonl");
    let text = fs::read_to_string(&masks).unwrap();
    let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    let fewer = dir.path().join("fewer.jsonl");
    fs::write(&fewer, short).unwrap();
    let out = run(&[
        "train",
        "--dataset",
        s(&dir.path().join("clean.jsonl")),
        "--masks",
        s(&fewer),
        "--vocab",
        s(&dir.path().join("vocab.txt")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("32 pairs but"), "{}", stderr(&out));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "1");
    let conf = dir.path().join("hot.conf");
    fs::write(&conf, "learning_rate = 1e38\nmax_epochs = 3\nd_model = 16\nn_heads = 2\nn_layers = 1\n").unwrap();
    let out = run(&[
        "--config",
        s(&conf),
        "train",
        "--dataset",
        s(&dir.path().join("clean.jsonl")),
        "--masks",
        s(&dir.path().join("masks.jsonl")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn resampling_changes_training_but_stays_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "2");
    let conf = dir.path().join("small.conf");
    fs::write(&conf, "learning_rate = 0.003\nmax_epochs = 3\nd_model = 16\nn_heads = 2\nn_layers = 1\n").unwrap();
    let (clean, masks) = (dir.path().join("clean.jsonl"), dir.path().join("masks.jsonl"));
    let train = |out: &str, extra: &[&str]| {
        let out_dir = dir.path().join(out);
        let mut args = vec![
            "--config",
            s(&conf),
            "train",
            "--dataset",
            s(&clean),
            "--masks",
            s(&masks),
            "--out",
            s(&out_dir),
        ];
        args.extend(extra);
        let out = run(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        (fs::read(out_dir.join("metrics.csv")).unwrap(), fs::read(out_dir.join("checkpoint.bin")).unwrap())
    };
    let fixed = train("fixed", &[]);
    let a = train("a", &["--resample-each-epoch"]);
    let b = train("b", &["--resample-each-epoch"]);
    assert_eq!(a, b);
    assert_ne!(a.0, fixed.0);
}
