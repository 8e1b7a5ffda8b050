use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use cfkit_core::backends::{AttributionMap, BackendError, Backends, EmbedClient, MockTask};
use cfkit_core::corpus::read_pairs_jsonl;
use cfkit_core::ctrlcode::{decide, primary_code, EmbeddingShift};
use cfkit_core::metrics::{intrinsic_report, CandidateSet};
use cfkit_core::pipeline::Candidate;
use cfkit_core::prompting::{enumerate_blanks, render_prompt, training_prompts, BlankMode, Prompt};
use cfkit_core::selection::{contrast_partition, Labeled};
use cfkit_core::templates::to_tsv;
use cfkit_core::workflow::{self, MiningOptions};
use cfkit_core::{ClassifierConfig, Config, ControlCode, Dataset, Perturbation, Sentence};
use serde::Deserialize;
use serde_json::Value;

use crate::args::{Command, GlobalOpts, StrategyArg};
use crate::io::{read_dataset, read_jsonl, read_lines, Output};

pub struct Env {
    pub config: Config,
    pub mock: bool,
}

impl Env {
    pub fn load(g: &GlobalOpts) -> Result<Self> {
        let mut config = match &g.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(seed) = g.seed {
            config = config.with_seed(seed);
        }
        if let Some(url) = &g.backend_url {
            config.backend.base_url = Some(url.clone());
        }
        config.backend = config.backend.with_env();
        if let Some(t) = g.mock_task {
            config.task.mock_task = MockTask::from(t);
        }
        Ok(Env { config, mock: g.mock })
    }

    pub fn backends(&self) -> Backends {
        if self.mock {
            Backends::mock(self.config.task.mock_task)
        } else {
            Backends::http(&self.config.backend)
        }
    }

    /// Fails early when a needed endpoint has no URL.
    fn require(&self, what: &'static str, url: Option<String>) -> Result<()> {
        if self.mock || url.is_some() {
            return Ok(());
        }
        Err(anyhow::Error::new(BackendError::NotConfigured(what)).context("pass --backend-url, set CFKIT_*_URL, or use --mock"))
    }

    pub fn classifier(&self) -> Result<ClassifierConfig> {
        let mut c = self.config.classifier()?;
        if !self.mock {
            if let Some(url) = self.config.backend.embed_url() {
                c.semantic_shift = Arc::new(EmbeddingShift(EmbedClient::new(url, &self.config.backend)));
            }
        }
        Ok(c)
    }
}

pub fn run(cmd: Command, env: &Env) -> Result<()> {
    match cmd {
        Command::Classify { input, output } => classify(env, &input, output.as_deref()),
        Command::Prompts { corpus, generation, codes, output } => prompts(env, &corpus, generation, codes, output.as_deref()),
        Command::Generate { corpus, ids, codes, no_predict, output } => {
            generate(env, &corpus, ids, codes, no_predict, output.as_deref())
        }
        Command::Filter { corpus, candidates, threshold, output, rejected } => {
            filter(env, &corpus, &candidates, threshold, output.as_deref(), rejected.as_deref())
        }
        Command::Select { input, strategy, corpus, k, attribution, output } => match strategy {
            StrategyArg::Diversity => select_diversity(env, &input, corpus.as_deref(), k, output.as_deref()),
            StrategyArg::Surprise => select_surprise(&input, corpus.as_deref(), attribution.as_deref(), output.as_deref()),
            StrategyArg::Contrast => select_contrast(&input, output.as_deref()),
        },
        Command::Metrics { input, corpus, label_mode, table, output } => {
            metrics(env, &input, corpus.as_deref(), label_mode.map(Into::into), table, output.as_deref())
        }
        Command::Templates { corpus, candidates, budget, json, output } => {
            templates(env, &corpus, &candidates, budget, json, output.as_deref())
        }
        Command::Serve { .. } | Command::MockBackend { .. } => unreachable!("handled by the async entry point"),
    }
}

fn invalid(msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Validation(msg.to_string()))
}

/// An input or usage problem (exit code 1).
#[derive(Debug)]
pub struct Validation(pub String);

impl std::fmt::Display for Validation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

fn is_conllu(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "conllu" || e == "conll")
}

fn classify(env: &Env, input: &Path, output: Option<&Path>) -> Result<()> {
    let cls = env.classifier()?;
    let mut out = Output::create(output)?;
    if is_conllu(input) {
        let ds = read_dataset(input)?;
        for (x, xhat) in ds.pairs() {
            let p = Perturbation::new(x.clone(), xhat.clone());
            out.jsonl(&decide(xhat.id.clone(), &p, &cls))?;
        }
    } else {
        let pairs = read_pairs_jsonl(crate::io::open(input)?).with_context(|| format!("parsing {}", input.display()))?;
        for r in pairs {
            let p = Perturbation::new(Sentence::shallow(r.id.clone(), &r.original), Sentence::shallow(format!("{}.rev", r.id), &r.revised));
            out.jsonl(&decide(r.id, &p, &cls))?;
        }
    }
    out.finish()
}

fn prompts(env: &Env, corpus: &Path, generation: bool, codes: Option<Vec<ControlCode>>, output: Option<&Path>) -> Result<()> {
    let ds = read_dataset(corpus)?;
    let cls = env.classifier()?;
    let mut out = Output::create(output)?;
    if generation {
        let codes = codes.unwrap_or_else(|| ControlCode::STEERABLE.to_vec());
        let cfg = &env.config.pipeline;
        for x in ds.originals() {
            let specs = enumerate_blanks(x, None, BlankMode::Generation, cfg.seed, &cfg.blanks)
                .with_context(|| format!("sentence {}", x.id))?;
            for code in &codes {
                for spec in &specs {
                    out.line(&render_prompt(&Prompt::for_generation(x, Some(*code), spec))?)?;
                }
            }
        }
    } else {
        if codes.is_some() {
            return Err(invalid("--codes applies to generation prompts only"));
        }
        for (x, xhat) in ds.pairs() {
            let p = Perturbation::new(x.clone(), xhat.clone());
            let code = primary_code(&p, &cls);
            match training_prompts(&p, Some(code)) {
                Ok(ps) => {
                    for prompt in ps {
                        out.line(&render_prompt(&prompt)?)?;
                    }
                }
                Err(e) => tracing::warn!(pair = %xhat.id, error = %e, "pair skipped"),
            }
        }
    }
    out.finish()
}

fn originals<'a>(ds: &'a Dataset, ids: Option<&[String]>) -> Result<Vec<&'a Sentence>> {
    match ids {
        None => Ok(ds.originals()),
        Some(ids) => ids.iter().map(|id| ds.get(id).ok_or_else(|| invalid(format!("unknown sentence {id}")))).collect(),
    }
}

fn generate(
    env: &Env,
    corpus: &Path,
    ids: Option<Vec<String>>,
    codes: Option<Vec<ControlCode>>,
    no_predict: bool,
    output: Option<&Path>,
) -> Result<()> {
    if codes.as_ref().is_some_and(Vec::is_empty) {
        return Err(invalid("--codes must name at least one code"));
    }
    env.require("generation", env.config.backend.generate_url())?;
    if !no_predict {
        env.require("prediction", env.config.backend.predict_url())?;
    }
    let ds = read_dataset(corpus)?;
    let cls = env.classifier()?;
    let mut backends = env.backends();
    if no_predict {
        backends.predictor = None;
    }
    let mut out = Output::create(output)?;
    for x in originals(&ds, ids.as_deref())? {
        let run = workflow::generate(x, codes.as_deref(), None, &backends, &cls, &env.config.pipeline, &env.config.task.frame)
            .with_context(|| format!("sentence {}", x.id))?;
        for f in &run.failures {
            tracing::warn!(sentence = %x.id, prompt = f.prompt_index, error = %f.error, "prompt failed");
        }
        for c in &run.candidates {
            out.jsonl(c)?;
        }
    }
    out.finish()
}

/// Candidates grouped by original, groups in order of first appearance.
fn group(cands: Vec<Candidate>) -> Vec<(String, Vec<Candidate>)> {
    let mut groups: Vec<(String, Vec<Candidate>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for c in cands {
        let i = *index.entry(c.original_id.clone()).or_insert_with(|| {
            groups.push((c.original_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(c);
    }
    groups
}

fn original<'a>(ds: &'a Dataset, id: &str) -> Result<&'a Sentence> {
    ds.get(id).ok_or_else(|| invalid(format!("candidate original {id} is not in the corpus")))
}

fn filter(
    env: &Env,
    corpus: &Path,
    candidates: &Path,
    threshold: Option<f64>,
    output: Option<&Path>,
    rejected: Option<&Path>,
) -> Result<()> {
    let threshold = threshold.unwrap_or(env.config.pipeline.fluency_threshold);
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(invalid("--threshold must be a non-negative number"));
    }
    env.require("scoring", env.config.backend.score_url())?;
    let ds = read_dataset(corpus)?;
    let backends = env.backends();
    let mut kept = Output::create(output)?;
    let mut rej = rejected.map(|p| Output::create(Some(p))).transpose()?;
    for (oid, cands) in group(read_jsonl(candidates)?) {
        let x = original(&ds, &oid)?;
        for c in workflow::filter(x, cands, &backends, threshold) {
            if c.kept {
                kept.jsonl(&c)?;
            } else if let Some(r) = rej.as_mut() {
                r.jsonl(&c)?;
            }
        }
    }
    if let Some(r) = rej {
        r.finish()?;
    }
    kept.finish()
}

fn need_corpus(corpus: Option<&Path>, strategy: &str) -> Result<Dataset> {
    let p = corpus.ok_or_else(|| invalid(format!("--corpus is required for {strategy} selection")))?;
    read_dataset(p)
}

fn select_diversity(env: &Env, input: &Path, corpus: Option<&Path>, k: Option<usize>, output: Option<&Path>) -> Result<()> {
    let ds = need_corpus(corpus, "diversity")?;
    let k = k.unwrap_or(env.config.selection.k);
    let mut out = Output::create(output)?;
    for (oid, cands) in group(read_jsonl(input)?) {
        let x = original(&ds, &oid)?;
        let ids = workflow::select_diverse(x, &cands, k, &env.config.selection.weights)?;
        for id in ids {
            out.jsonl(cands.iter().find(|c| c.id == id).expect("selected from this group"))?;
        }
    }
    out.finish()
}

#[derive(Deserialize)]
struct AttributionLine {
    id: String,
    #[serde(flatten)]
    map: AttributionMap,
}

fn select_surprise(input: &Path, corpus: Option<&Path>, attribution: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let attribution = attribution.ok_or_else(|| invalid("surprise selection needs --attribution"))?;
    let ds = need_corpus(corpus, "surprise")?;
    let groups: BTreeMap<String, Vec<Candidate>> = group(read_jsonl(input)?).into_iter().collect();
    let mut out = Output::create(output)?;
    for line in read_jsonl::<AttributionLine>(attribution)? {
        let x = original(&ds, &line.id)?;
        let Some(cands) = groups.get(&line.id) else {
            tracing::warn!(sentence = %line.id, "no candidates for attributed sentence");
            continue;
        };
        let result = workflow::select_surprising(x, &line.map, cands).with_context(|| format!("sentence {}", line.id))?;
        let mut v = serde_json::to_value(&result)?;
        v.as_object_mut().expect("struct serializes to an object").insert("sentence_id".into(), line.id.clone().into());
        out.jsonl(&v)?;
    }
    out.finish()
}

fn label_of(v: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| {
        let mut cur = v;
        for part in k.split('.') {
            cur = cur.get(part)?;
        }
        match cur {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        }
    })
}

fn select_contrast(input: &Path, output: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(input)? {
        let v: Value = serde_json::from_str(&line).with_context(|| format!("{}:{n}", input.display()))?;
        let label = label_of(&v, &["label", "label_revised", "prediction.label"]);
        let original_label = label_of(&v, &["original_label", "label_original", "original_prediction.label"]);
        let id = label_of(&v, &["id"]).unwrap_or_else(|| format!("line {n}"));
        rows.push(Labeled { item: (id, line), label, original_label });
    }
    let part = contrast_partition(rows, |(id, _)| id.clone()).map_err(invalid)?;
    let mut out = Output::create(output)?;
    for (_, line) in &part.kept {
        out.line(line)?;
    }
    tracing::info!(kept = part.kept.len(), dropped = part.dropped.len(), "contrast partition");
    out.finish()
}

#[derive(Deserialize)]
struct SetLine {
    original: String,
    revisions: Vec<String>,
}

fn metrics(
    env: &Env,
    input: &Path,
    corpus: Option<&Path>,
    mode: Option<cfkit_core::metrics::LabelMode>,
    table: bool,
    output: Option<&Path>,
) -> Result<()> {
    let lines = read_lines(input)?;
    let is_sets = lines
        .first()
        .and_then(|(_, l)| serde_json::from_str::<Value>(l).ok())
        .is_some_and(|v| v.get("revisions").is_some());
    let sets: Vec<CandidateSet> = if is_sets {
        lines
            .iter()
            .map(|(n, l)| {
                let s: SetLine = serde_json::from_str(l).with_context(|| format!("{}:{n}", input.display()))?;
                Ok(CandidateSet {
                    original: Sentence::shallow(format!("set{n}"), &s.original),
                    revisions: s.revisions.iter().enumerate().map(|(i, r)| Sentence::shallow(format!("set{n}.{i}"), r)).collect(),
                })
            })
            .collect::<Result<_>>()?
    } else {
        let ds = corpus.map(read_dataset).transpose()?.ok_or_else(|| invalid("--corpus is required for candidate input"))?;
        group(read_jsonl(input)?)
            .into_iter()
            .map(|(oid, cands)| {
                Ok(CandidateSet {
                    original: original(&ds, &oid)?.clone(),
                    revisions: cands
                        .into_iter()
                        .map(|c| c.revised.unwrap_or_else(|| Sentence::shallow(c.id.clone(), &c.revised_text)))
                        .collect(),
                })
            })
            .collect::<Result<_>>()?
    };
    let report = intrinsic_report(&sets, mode.unwrap_or(env.config.metrics.label_mode)).map_err(invalid)?;
    let mut out = Output::create(output)?;
    if table {
        out.text(&report.to_table())?;
    } else {
        out.line(&serde_json::to_string_pretty(&report)?)?;
    }
    out.finish()
}

fn templates(env: &Env, corpus: &Path, candidates: &Path, budget: Option<f64>, json: bool, output: Option<&Path>) -> Result<()> {
    let ds = read_dataset(corpus)?;
    let cands: Vec<Candidate> = read_jsonl(candidates)?;
    let mut opts = MiningOptions::from(&env.config.templates);
    if let Some(b) = budget {
        opts.budget = b;
    }
    let run = workflow::mine_dataset(&ds, &cands, &opts)?;
    let mut out = Output::create(output)?;
    if json {
        out.line(&serde_json::to_string_pretty(&run)?)?;
    } else {
        out.text(&to_tsv(&run.reports))?;
    }
    out.finish()
}
