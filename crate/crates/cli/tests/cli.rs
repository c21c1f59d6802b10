use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn envdesign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_envdesign")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn verify_duality_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = envdesign(&["verify-duality", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("status = pass"), "{stdout}");
    assert!(dir.path().join("duality_report.txt").exists());
}

#[test]
fn impossible_tolerance_exits_with_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = envdesign(&["verify-duality", "--out", &out_arg(dir.path()), "--set", "duality.tolerance=-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = envdesign(&["train-soft", "--out", &out_arg(dir.path()), "--set", "soft.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("soft.bogus"));
}

#[test]
fn bad_flag_is_a_config_error() {
    let out = envdesign(&["train-soft", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_refusal_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = envdesign(&["oracle", "--out", &out_arg(dir.path()), "--set", "side=6"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = failed"));
}

#[test]
fn config_file_seed_and_overrides_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "# small run\nexperiment = train-soft\nside = 3\nsoft.iterations = 5\nseed = 3\n").unwrap();
    let run = dir.path().join("run");
    let out = envdesign(&[
        "train-soft",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--set",
        "soft.snapshot_every=2",
        "--out",
        &out_arg(&run),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    for line in ["seed = 11", "side = 3", "soft.iterations = 5", "soft.snapshot_every = 2", "status = complete"] {
        assert!(manifest.lines().any(|l| l == line), "{line} missing from\n{manifest}");
    }
    assert!(run.join("heatmaps/blockage_00004.pgm").exists());
}

#[test]
fn evaluate_rejects_disconnected_map() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("closed.txt");
    // start sealed off from the end
    fs::write(&map, "3\nS#.\n#..\n..E\n").unwrap();
    let out = envdesign(&["evaluate", "--out", &out_arg(&dir.path().join("o")), "--set", &format!("evaluate.map={}", map.display())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_hard_small_run_writes_best_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = envdesign(&[
        "train-hard",
        "--out",
        &out_arg(dir.path()),
        "--set",
        "side=3",
        "--set",
        "gen.rounds=3",
        "--set",
        "gen.batch_size=4",
        "--set",
        "gen.hidden=8",
        "--set",
        "agent=dfs",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("best_map.txt").exists());
    assert!(dir.path().join("snapshots/round_00000.txt").exists());
    let curve = fs::read_to_string(dir.path().join("generator_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
}
