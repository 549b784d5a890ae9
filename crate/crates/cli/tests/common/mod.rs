#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn spdtraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdtraj"))
        .args(args)
        .output()
        .expect("spawn spdtraj")
}

pub fn ok(args: &[&str]) -> String {
    let out = spdtraj(args);
    assert!(
        out.status.success(),
        "spdtraj {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a synthetic dataset under `dir` and returns the manifest path.
pub fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("manifest.json")
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn accuracy(report: &Value) -> f64 {
    report["overall_accuracy"].as_f64().unwrap()
}
