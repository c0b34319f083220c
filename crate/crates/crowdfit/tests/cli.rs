use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdfit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../samples")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let spec = sample("sim.toml");
    for out in [&a, &b] {
        let o = bin(&["simulate", "--spec", s(&spec), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (da, db) = (dir_contents(&a), dir_contents(&b));
    assert!(da.iter().any(|(n, _)| n == "events.jsonl"));
    assert!(da.iter().any(|(n, _)| n == "artifact.json"));
    assert_eq!(da, db);

    let c = tmp.path().join("c");
    assert!(bin(&[
        "simulate",
        "--spec",
        s(&spec),
        "--out",
        s(&c),
        "--seed",
        "8"
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("events.jsonl")).unwrap(),
        fs::read(c.join("events.jsonl")).unwrap()
    );
}

#[test]
fn analyze_verify_and_model_once_on_a_sim_log() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(bin(&[
        "simulate",
        "--spec",
        s(&sample("sim.toml")),
        "--out",
        s(&sim)
    ])
    .status
    .success());
    let log = sim.join("events.jsonl");

    let report = tmp.path().join("report");
    let o = bin(&["analyze", "--log", s(&log), "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "rankings.csv",
        "powerlaw.txt",
        "participation.csv",
        "quality.csv",
    ] {
        assert!(report.join(f).exists(), "{f}");
    }
    let quality = fs::read_to_string(report.join("quality.csv")).unwrap();
    assert!(quality.starts_with("built_at,model_r2\n"));
    assert_eq!(
        fs::read(report.join("rankings.csv")).unwrap(),
        fs::read(sim.join("rankings.csv")).unwrap()
    );

    let o = bin(&[
        "verify-log",
        "--log",
        s(&log),
        "--artifact",
        s(&sim.join("artifact.json")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));

    let before = dir_contents(&sim);
    let o = bin(&["model-once", "--log", s(&log)]);
    assert!(o.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in [
        "built_at", "n", "k", "lambda", "col_ids", "c", "d", "model_r2",
    ] {
        assert!(printed.get(key).is_some(), "{key}");
    }
    // model-once writes nothing without --out.
    assert_eq!(dir_contents(&sim), before);
}

#[test]
fn corrupt_logs_fail_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(bin(&[
        "simulate",
        "--spec",
        s(&sample("sim.toml")),
        "--out",
        s(&sim)
    ])
    .status
    .success());
    let text = fs::read_to_string(sim.join("events.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let gap = tmp.path().join("gap.jsonl");
    let kept: Vec<&str> = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 4)
        .map(|(_, l)| *l)
        .collect();
    fs::write(&gap, kept.join("\n") + "\n").unwrap();
    let o = bin(&["verify-log", "--log", s(&gap)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("CorruptLog: gap at seq 5"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    // A tampered artifact digest is caught too.
    let tampered = tmp.path().join("tampered.jsonl");
    let idx = lines
        .iter()
        .position(|l| l.contains("\"EngineRun\""))
        .unwrap();
    let mut edited: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    let digest_at = edited[idx].find("\"digest\":\"").unwrap() + 10;
    edited[idx].replace_range(digest_at..digest_at + 4, "0000");
    fs::write(&tampered, edited.join("\n") + "\n").unwrap();
    let o = bin(&["verify-log", "--log", s(&tampered)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CorruptLog"));

    // A different artifact file does not verify.
    let other = tmp.path().join("other.json");
    fs::write(&other, b"{}").unwrap();
    let o = bin(&[
        "verify-log",
        "--log",
        s(&sim.join("events.jsonl")),
        "--artifact",
        s(&other),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin(&[]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["analyze", "--log"]).status.code(), Some(2));
    assert_eq!(
        bin(&["simulate", "--spec", "x.toml", "--out", "y", "--seed", "abc"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_1() {
    let o = bin(&["verify-log", "--log", "/nonexistent/events.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["serve", "--config", "/nonexistent/study.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_study_config_parses() {
    let cfg = crowdfit::config::ConfigFile::load(&sample("study.toml")).unwrap();
    assert_eq!(cfg.study.seed_questions.len(), 3);
    assert!(cfg.server.log.ends_with("bmi-events.jsonl"));
}
