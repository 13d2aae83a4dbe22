use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_surfel-avatar")).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_rig_train_render_eval() {
    let dir = tempfile::tempdir().unwrap();
    let rig = dir.path().join("rig");
    run(&["gen-rig", "--out", s(&rig), "--views", "3", "--frames", "2", "--size", "32"]);
    assert!(rig.join("train.toml").is_file());

    // shrink the weight field so the smoke run stays quick
    let cfg = fs::read_to_string(rig.join("train.toml")).unwrap();
    let cfg = cfg.replace("resolution = [48, 48, 48]", "resolution = [16, 16, 16]");
    fs::write(rig.join("train.toml"), cfg).unwrap();

    let run_dir = dir.path().join("run");
    run(&[
        "--seed",
        "3",
        "--deterministic",
        "--precision",
        "f32",
        "--eccentricity-definition",
        "focal-ratio",
        "train",
        "--config",
        s(&rig.join("train.toml")),
        "--iterations",
        "5",
        "--output",
        s(&run_dir),
    ]);
    for f in ["checkpoint.bin", "train_log.csv", "config.toml"] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);
    let resolved = fs::read_to_string(run_dir.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 3"));
    assert!(resolved.contains("focal-ratio"));

    let frames = dir.path().join("frames");
    let out = run(&[
        "render",
        "--checkpoint",
        s(&run_dir.join("checkpoint.bin")),
        "--poses",
        s(&rig.join("novel").join("poses.json")),
        "--cameras",
        s(&rig.join("novel").join("cameras.json")),
        "--out",
        s(&frames),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FPS"));
    assert!(frames.join("00").join("0000.png").is_file());
    assert!(frames.join("00").join("0000_alpha.png").is_file());

    let csv = dir.path().join("eval.csv");
    let out = run(&[
        "eval",
        "--checkpoint",
        s(&run_dir.join("checkpoint.bin")),
        "--dataset",
        s(&rig),
        "--csv",
        s(&csv),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));
    assert!(fs::read_to_string(&csv).unwrap().starts_with("view,"));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_surfel-avatar"))
        .args(["train", "--config", s(&dir.path().join("missing.toml"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let out = Command::new(env!("CARGO_BIN_EXE_surfel-avatar"))
        .args(["--precision", "f16", "gen-rig", "--out", s(dir.path())])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
