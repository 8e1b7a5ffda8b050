//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfkit_core::pipeline::{Candidate, CandidateRow};

/// Set to regenerate the golden files instead of comparing against them.
pub const BLESS_VAR: &str = "CFKIT_BLESS";

pub fn cfkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfkit"))
}

pub fn fixture_path(name: &str) -> PathBuf {
    cfkit_testkit::fixtures_dir().join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    fixture_path("golden").join(name)
}

/// Runs a command that must succeed and returns its stdout.
pub fn run_ok(cmd: &mut Command) -> Vec<u8> {
    let out = cmd.output().expect("spawning cfkit");
    assert!(out.status.success(), "{cmd:?} failed ({}): {}", out.status, String::from_utf8_lossy(&out.stderr));
    out.stdout
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning cfkit")
}

/// Outputs of one `generate -> filter -> select -> templates` run.
pub struct Chain {
    pub generated: Vec<u8>,
    pub kept: Vec<u8>,
    pub rejected: Vec<u8>,
    pub selected: Vec<u8>,
    pub templates: Vec<u8>,
}

/// Runs the end-to-end chain with the mock backend and the reduced fixture config.
pub fn run_chain(dir: &Path) -> Chain {
    let corpus = fixture_path("corpus.conllu");
    let config = fixture_path("e2e.toml");
    let base = || {
        let mut c = cfkit();
        c.arg("--mock").arg("--config").arg(&config);
        c
    };
    let f = |name: &str| dir.join(name);
    run_ok(base().arg("generate").arg(&corpus).arg("-o").arg(f("generated.jsonl")));
    run_ok(
        base()
            .arg("filter")
            .arg(&corpus)
            .arg(f("generated.jsonl"))
            .arg("-o")
            .arg(f("kept.jsonl"))
            .arg("--rejected")
            .arg(f("rejected.jsonl")),
    );
    run_ok(
        base()
            .args(["select", "--strategy", "diversity", "--corpus"])
            .arg(&corpus)
            .arg(f("kept.jsonl"))
            .arg("-o")
            .arg(f("selected.jsonl")),
    );
    run_ok(base().arg("templates").arg(&corpus).arg(f("selected.jsonl")).arg("-o").arg(f("templates.tsv")));
    let read = |name: &str| std::fs::read(f(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"));
    Chain {
        generated: read("generated.jsonl"),
        kept: read("kept.jsonl"),
        rejected: read("rejected.jsonl"),
        selected: read("selected.jsonl"),
        templates: read("templates.tsv"),
    }
}

/// Candidate JSONL reduced to one compact row per line.
pub fn rows(jsonl: &[u8]) -> String {
    let text = std::str::from_utf8(jsonl).expect("utf-8 jsonl");
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let c: Candidate = serde_json::from_str(line).expect("candidate line");
        out.push_str(&serde_json::to_string(&CandidateRow::from(&c)).unwrap());
        out.push('\n');
    }
    out
}

/// Compares `actual` with a golden file, or rewrites it when blessing.
pub fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os(BLESS_VAR).is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    if expected != actual {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).map_or_else(
            || format!("line counts {} vs {}", expected.lines().count(), actual.lines().count()),
            |i| format!("first difference at line {}", i + 1),
        );
        panic!("{name} differs from golden: {line} (rerun with {BLESS_VAR}=1 to update)");
    }
}
