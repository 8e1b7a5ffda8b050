//! The binary against direct library calls, plus exit codes.

mod common;

use cfkit_core::backends::Backends;
use cfkit_core::corpus::parse_conllu_str;
use cfkit_core::ctrlcode::{decide, ClassifierConfig};
use cfkit_core::diff::Perturbation;
use cfkit_core::pipeline::Candidate;
use cfkit_core::workflow;
use cfkit_core::{Config, ControlCode};
use cfkit_testkit::fixture;
use serde_json::Value;

use common::{cfkit, fixture_path, run, run_ok};

fn jsonl(bytes: &[u8]) -> Vec<String> {
    std::str::from_utf8(bytes).unwrap().lines().map(String::from).collect()
}

#[test]
fn help_lists_subcommands() {
    let out = String::from_utf8(run_ok(cfkit().arg("--help"))).unwrap();
    for cmd in ["classify", "prompts", "generate", "filter", "select", "metrics", "templates", "serve", "mock-backend"] {
        assert!(out.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn classify_matches_library() {
    let out = run_ok(cfkit().arg("classify").arg(fixture_path("table1.conllu")));
    let ds = parse_conllu_str(&fixture("table1.conllu")).unwrap();
    let cfg = ClassifierConfig::default();
    let expected: Vec<String> = ds
        .pairs()
        .into_iter()
        .map(|(x, y)| serde_json::to_string(&decide(y.id.clone(), &Perturbation::new(x.clone(), y.clone()), &cfg)).unwrap())
        .collect();
    assert_eq!(jsonl(&out), expected);
    let codes: Vec<String> = expected.iter().map(|l| serde_json::from_str::<Value>(l).unwrap()["code"].to_string()).collect();
    assert_eq!(codes.iter().filter(|c| *c == "\"negation\"").count(), 2);
}

#[test]
fn generate_and_filter_match_library() {
    let corpus = fixture_path("corpus.conllu");
    let dir = tempfile::tempdir().unwrap();
    let gen_path = dir.path().join("gen.jsonl");
    run_ok(cfkit().args(["--mock", "--seed", "5", "generate", "--ids", "c004", "--codes", "negation,lexical"]).arg(&corpus).arg("-o").arg(&gen_path));
    let kept = run_ok(cfkit().args(["--mock", "--seed", "5", "filter"]).arg(&corpus).arg(&gen_path));

    let ds = parse_conllu_str(&fixture("corpus.conllu")).unwrap();
    let config = Config::default().with_seed(5);
    let backends = Backends::mock(config.task.mock_task);
    let x = ds.get("c004").unwrap();
    let codes = [ControlCode::Negation, ControlCode::Lexical];
    let run = workflow::generate(x, Some(&codes), None, &backends, &config.classifier().unwrap(), &config.pipeline, &config.task.frame)
        .unwrap();
    let expected: Vec<String> = run.candidates.iter().map(|c| serde_json::to_string(c).unwrap()).collect();
    assert_eq!(jsonl(&std::fs::read(&gen_path).unwrap()), expected);

    let filtered = workflow::filter(x, run.candidates, &backends, config.pipeline.fluency_threshold);
    let expected: Vec<String> = filtered.iter().filter(|c| c.kept).map(|c| serde_json::to_string(c).unwrap()).collect();
    assert_eq!(jsonl(&kept), expected);
    let parsed: Vec<Candidate> = jsonl(&kept).iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(parsed.iter().all(|c| c.kept && c.original_id == "c004"));
}

#[test]
fn identical_revisions_have_self_bleu_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sets.jsonl");
    std::fs::write(
        &input,
        r#"{"original":"the dog runs","revisions":["the dog runs fast","the dog runs fast","the dog runs fast"]}"#,
    )
    .unwrap();
    let out: Value = serde_json::from_slice(&run_ok(cfkit().arg("metrics").arg(&input))).unwrap();
    assert_eq!(out["self_bleu"], 1.0, "{out}");
}

#[test]
fn contrast_keeps_flipped_rows_verbatim() {
    let out = run_ok(cfkit().args(["select", "--strategy", "contrast"]).arg(fixture_path("contrast.jsonl")));
    let lines = jsonl(&out);
    assert_eq!(lines.len(), 45);
    let source = fixture("contrast.jsonl");
    for l in &lines {
        assert!(source.lines().any(|s| s == l));
        let v: Value = serde_json::from_str(l).unwrap();
        assert_ne!(v["label_original"], v["label_revised"]);
    }
}

#[test]
fn templates_tsv_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture_path("corpus.conllu");
    let cands = dir.path().join("c.jsonl");
    run_ok(cfkit().args(["--mock", "generate", "--ids", "c001,c002,c003", "-o"]).arg(&cands).arg(&corpus));
    let out = String::from_utf8(run_ok(cfkit().arg("templates").arg(&corpus).arg(&cands))).unwrap();
    assert!(out.starts_with("before\tafter\tgranularity\t"), "{out}");
}

#[test]
fn validation_errors_exit_one() {
    let corpus = fixture_path("corpus.conllu");
    let out = run(cfkit().args(["--mock", "generate", "--ids", "nope"]).arg(&corpus));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown sentence nope"));
    let out = run(cfkit().args(["select", "--strategy", "diversity"]).arg(fixture_path("contrast.jsonl")));
    assert_eq!(out.status.code(), Some(1));
    let out = run(cfkit().arg("classify").arg("/nonexistent/pairs.jsonl"));
    assert_eq!(out.status.code(), Some(1));
}

fn without_backend_env(mut cmd: std::process::Command) -> std::process::Command {
    for var in ["CFKIT_GEN_URL", "CFKIT_SCORE_URL", "CFKIT_PREDICT_URL", "CFKIT_EMBED_URL"] {
        cmd.env_remove(var);
    }
    cmd
}

#[test]
fn backend_errors_exit_two() {
    let corpus = fixture_path("corpus.conllu");
    let out = run(without_backend_env(cfkit()).args(["generate", "--ids", "c001"]).arg(&corpus));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(without_backend_env(cfkit()).args(["--backend-url", "http://127.0.0.1:1", "generate", "--ids", "c001", "--no-predict"]).arg(&corpus));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
