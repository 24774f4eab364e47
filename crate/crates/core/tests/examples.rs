//! Runs every cargo example binary and checks it exits cleanly.
//! `cargo test` builds the examples before running integration tests.

use std::path::PathBuf;
use std::process::Command;

fn example_binary(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    // target/<profile>/deps/examples-<hash> -> target/<profile>/examples/<name>
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    profile_dir.join("examples").join(format!("{name}{}", std::env::consts::EXE_SUFFIX))
}

fn run(name: &str, expect: &str) {
    let bin = example_binary(name);
    assert!(bin.exists(), "{} not built", bin.display());
    let out = Command::new(&bin).env_remove("LATERAL_BENCH_API_KEY").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{name} failed:\n{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains(expect), "{name} output lacks {expect:?}:\n{stdout}");
}

#[test]
fn validate_dataset() {
    run("validate_dataset", "3 error(s), 2 warning(s)");
}

#[test]
fn score_predictions() {
    run("score_predictions", "overall,,,0.78");
}

#[test]
fn train_minimcq() {
    run("train_minimcq", "predictions identical after reload");
}

#[test]
fn gradient_check() {
    run("gradient_check", "worst relative error");
}

#[test]
fn llm_zero_shot() {
    run("llm_zero_shot", "syn-7   ABSTAIN  attempts 3");
}

#[test]
fn temperature_sweep() {
    run("temperature_sweep", "wrote 7 files");
}
