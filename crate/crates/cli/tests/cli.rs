use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cam_core::checkpoint::Checkpoint;
use cam_core::game::AgentId;

const MATRIX_CONFIG: &str = r#"
generations = 1
episodes_per_generation = 32
eval_games = 40

[env]
kind = "matrix"
game = "biased_rps"

[policy]
kind = "tabular"

[objective]
learning_rate = 0.1

[cam]
sweeps = 0
"#;

const DUEL_CONFIG: &str = r#"
population_size = 4
generations = 1
episodes_per_generation = 4
eval_games = 4

[env]
kind = "duel"

[cam]
sweeps = 0
eval_games = 4
"#;

fn cam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cam"))
        .args(args)
        .output()
        .expect("spawn cam")
}

fn ok(args: &[&str]) -> String {
    let out = cam(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_mia_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MATRIX_CONFIG);
    let out = dir.path().join("mia");
    ok(&["train-mia", "--config", &cfg, "--out", s(&out), "--seed", "3"]);
    for f in ["gen_0.ckpt", "gen_1.ckpt", "metrics.jsonl", "config.toml", "payoff_gen1.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("master_seed = 3"));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MATRIX_CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["train-mia", "--config", &cfg, "--out", s(&a), "--seed", "5", "--workers", "1"]);
    ok(&["train-mia", "--config", &cfg, "--out", s(&b), "--seed", "5", "--workers", "3"]);
    let copy = a.join("config.toml");
    ok(&["train-mia", "--config", s(&copy), "--out", s(&c)]);
    for f in ["metrics.jsonl", "gen_1.ckpt", "payoff_gen1.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs across worker counts");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f} differs when rerun from the copied config");
    }
}

#[test]
fn malformed_config_exits_2_and_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("learnin_rate = 0.1\n{MATRIX_CONFIG}"));
    let out = cam(&["train-mia", "--config", &cfg, "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learnin_rate"));

    let cfg = write_config(dir.path(), &MATRIX_CONFIG.replace("learning_rate = 0.1", "gamma = 2.0"));
    let out = cam(&["train-mia", "--config", &cfg, "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_sweeps_clone_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DUEL_CONFIG);
    let mia = dir.path().join("mia");
    let spec = dir.path().join("cam");
    ok(&["train-mia", "--config", &cfg, "--out", s(&mia)]);
    let before = fs::read(mia.join("gen_1.ckpt")).unwrap();
    let stdout = ok(&["train-cam", "--mia", s(&mia), "--out", s(&spec)]);
    assert!(stdout.contains("unchanged"));
    assert_eq!(before, fs::read(mia.join("gen_1.ckpt")).unwrap());
    let baseline = Checkpoint::load(&mia.join("gen_1.ckpt")).unwrap();
    let files: Vec<_> = fs::read_dir(&spec)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("specialist_"))
        .collect();
    assert_eq!(files.len(), 4);
    for k in 0..4 {
        let c = Checkpoint::load(&spec.join(format!("specialist_{k}.ckpt"))).unwrap();
        assert_eq!(c.agent, Some(k));
        assert_eq!(c.policy, baseline.policy.clone_for_specialist(AgentId(k)).unwrap());
    }
}

#[test]
fn train_cam_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MATRIX_CONFIG);
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = cam(&["train-cam", "--mia", s(&empty), "--config", &cfg, "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn eval_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MATRIX_CONFIG);
    let mia = dir.path().join("mia");
    let spec = dir.path().join("cam");
    let ev = dir.path().join("ev");
    ok(&["train-mia", "--config", &cfg, "--out", s(&mia)]);
    ok(&["train-cam", "--mia", s(&mia), "--out", s(&spec)]);

    ok(&["eval", "matrix", "--inputs", s(&mia), "--out", s(&ev)]);
    let csv = fs::read_to_string(ev.join("matrix.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].len(), 2);
    assert_eq!(rows[0][1] + rows[1][0], 1.0);

    let s0 = spec.join("specialist_0.ckpt");
    let stdout = ok(&["eval", "diversity", "--inputs", s(&s0), s(&s0), "--out", s(&ev)]);
    assert!(stdout.contains("expected distance: 0.0000"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("diversity.json")).unwrap()).unwrap();
    assert_eq!(report["expected_distance"].as_f64(), Some(0.0));
    assert!(ev.join("radial.csv").exists());

    let stdout = ok(&["eval", "diversity", "--inputs", s(&mia), "--compare", s(&spec), "--out", s(&ev)]);
    assert!(stdout.contains("relative change:"), "{stdout}");

    let stdout = ok(&["eval", "mi", "--inputs", s(&spec), "--games", "50", "--out", s(&ev)]);
    assert!(stdout.contains("aggregate MI"));
    assert!(ev.join("mi.json").exists());
}

#[test]
fn incompatible_architectures_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MATRIX_CONFIG);
    let mlp_cfg = write_config(
        &{
            let d = dir.path().join("m");
            fs::create_dir(&d).unwrap();
            d
        },
        &MATRIX_CONFIG.replace("kind = \"tabular\"", "kind = \"mlp\""),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train-mia", "--config", &cfg, "--out", s(&a)]);
    ok(&["train-mia", "--config", &mlp_cfg, "--out", s(&b)]);
    let out = cam(&[
        "eval",
        "matrix",
        "--inputs",
        s(&a.join("gen_1.ckpt")),
        s(&b.join("gen_1.ckpt")),
        "--out",
        s(&dir.path().join("ev")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("architecture"));
}

#[test]
fn checks_pass() {
    let out = ok(&["check", "gradients"]);
    assert!(out.contains("all 25 checks passed"));
    assert!(out.contains("max_error"));
    let out = ok(&["check", "oracle"]);
    assert!(!out.contains("FAIL"));
}
