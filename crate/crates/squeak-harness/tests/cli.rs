//! Smoke tests for the command-line interface: exit codes, file
//! outputs, and the generate -> run round trip on a CSV dataset.

use std::process::Command;

fn harness() -> Command {
    Command::new(env!("CARGO_BIN_EXE_squeak-harness"))
}

#[test]
fn generate_then_run_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = dir.path().join("report.jsonl");

    let status = harness()
        .args(["generate", "--dataset", "blocks:n=24,blocks=4,seed=7"])
        .args(["--kernel", "linear", "--out"])
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(data.exists());

    let output = harness()
        .args(["run", "--dataset"])
        .arg(format!("csv:{}", data.display()))
        .args(["--kernel", "linear", "--seeds", "0,1", "--checkpoints", "8,24", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("4 new records"), "stdout: {stdout}");
    assert!(out.exists());
    assert!(dir.path().join("report.csv").exists());

    // Running again against the same output without --resume is a
    // configuration error (exit code 2); with --resume it succeeds
    // and adds nothing.
    let status = harness()
        .args(["run", "--dataset"])
        .arg(format!("csv:{}", data.display()))
        .args(["--kernel", "linear", "--seeds", "0,1", "--checkpoints", "8,24", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let output = harness()
        .args(["run", "--dataset"])
        .arg(format!("csv:{}", data.display()))
        .args(["--kernel", "linear", "--seeds", "0,1", "--checkpoints", "8,24", "--resume", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("0 new records"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "dataset = \"gaussian:n=16,seed=1\"\nepsilon = 0.5\nseeds = [0]\n",
    )
    .unwrap();
    let out = dir.path().join("report.jsonl");
    let status = harness()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--checkpoints", "16", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.exists());
}

#[test]
fn invalid_arguments_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let cases: &[&[&str]] = &[
        &["run", "--dataset", "gaussian:n=8", "--sampler", "bogus"],
        &["run", "--dataset", "gaussian:n=8", "--epsilon", "1.5"],
        &["run", "--dataset", "csv:/nonexistent/file.csv"],
        &["run", "--dataset", "gaussian:n=8", "--checkpoints", "99"],
    ];
    for args in cases {
        let output = harness().args(*args).args(["--out"]).arg(&out).output().unwrap();
        assert_eq!(output.status.code(), Some(2), "args {args:?}: {output:?}");
    }
}
