//! Helpers for driving the `lsg` binary in tests.
//!
//! Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn lsg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LSG_DETERMINISTIC")
        .output()
        .expect("failed to run lsg binary")
}

pub fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Builds a small generator checkpoint plus a synthesized on-manifold
/// target image, entirely through the CLI.
pub fn setup_toy(dir: &Path) -> (String, String) {
    let gen = dir.join("gen.ckpt").display().to_string();
    let out = lsg(
        &[
            "make-generator",
            "--resolution",
            "16",
            "--style-dim",
            "8",
            "--base-channels",
            "4",
            "--channel-cap",
            "16",
            "--seed",
            "5",
            "--out",
            &gen,
        ],
        dir,
    );
    assert_ok(&out, "make-generator");

    let mean = dir.join("mean.wplt").display().to_string();
    let out = lsg(
        &["mean-latent", "--generator", &gen, "--samples", "64", "--seed", "1", "--out", &mean],
        dir,
    );
    assert_ok(&out, "mean-latent");

    let target = dir.join("target.png").display().to_string();
    let out = lsg(
        &["synth", "--latent", &mean, "--generator", &gen, "--out", &target],
        dir,
    );
    assert_ok(&out, "synth target");
    (gen, target)
}
