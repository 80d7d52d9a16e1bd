use std::path::Path;
use std::process::{Command, Output};

fn tilediff(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilediff"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TILEDIFF_SEED")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let mut args = vec!["--preset", "desk", "generate", "--levels", "1", "--seed", "11", "--out", name];
    args.extend_from_slice(extra);
    tilediff(&args, dir)
}

#[test]
fn generate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), "p", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "complete");
    assert_eq!(summary["levels"][1]["extent"], 64);
    assert!(dir.path().join("p/level_1/tile_1_1.png").exists());

    let v = tilediff(&["verify", "p"], dir.path());
    assert!(v.status.success());
    let report: serde_json::Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(report["files_checked"], 5);
}

#[test]
fn tampered_tile_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "p", &[]).status.success());
    let tile = dir.path().join("p/level_1/tile_0_1.png");
    let mut bytes = std::fs::read(&tile).unwrap();
    let n = bytes.len();
    bytes[n - 20] ^= 0x40;
    std::fs::write(&tile, bytes).unwrap();

    let v = tilediff(&["verify", "p"], dir.path());
    assert_eq!(v.status.code(), Some(3));
    let err = stderr_json(&v);
    assert_eq!(err["error"], "checksum");
    assert!(err["path"].as_str().unwrap().ends_with("level_1/tile_0_1.png"));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "a", &["--workers", "1"]).status.success());
    assert!(generate(dir.path(), "b", &["--workers", "3"]).status.success());
    for f in ["level_0/tile_0_0.png", "level_1/tile_0_0.png", "level_1/tile_1_1.png"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--preset", "desk", "generate", "--levels", "0", "--out", "p"];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_tilediff"))
            .args(&args)
            .current_dir(dir.path())
            .env("TILEDIFF_SEED", "42")
            .output()
            .unwrap()
    };
    let from_env: serde_json::Value = serde_json::from_slice(&run(&[]).stdout).unwrap();
    assert_eq!(from_env["seed"], "42");
    let from_flag: serde_json::Value = serde_json::from_slice(&run(&["--seed", "43"]).stdout).unwrap();
    assert_eq!(from_flag["seed"], "43");
}

#[test]
fn bad_input_reports_json_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tilediff(&["--preset", "desk", "generate", "--r", "99"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "invalid_parameter");

    let out = tilediff(&["no-such-command"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = tilediff(&["verify", "missing"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn upscale_doubles_a_png() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(dir.path(), "p", &[]).status.success());
    let out = tilediff(
        &[
            "--preset",
            "desk",
            "upscale",
            "--input",
            "p/level_1/tile_0_0.png",
            "--output",
            "up.png",
            "--stage",
            "2",
            "--resolution",
            "50",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["extent"], serde_json::json!([64, 64]));
    assert_eq!(summary["resolution"], 25.0);
}
