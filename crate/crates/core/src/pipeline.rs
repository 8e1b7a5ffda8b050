//! Prompt enumeration, generation, parsing, deduplication and fluency filtering.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, GenerationParams, Generator, PredictionRecord, Predictor, Scorer, TaskFrame};
use crate::corpus::{normalize_spaces, Sentence, TokenRange};
use crate::ctrlcode::{primary_code, ClassifierConfig, ControlCode};
use crate::diff::Perturbation;
use crate::prompting::{enumerate_blanks, split_fills, fill_template, BlankConfig, BlankMode, BlankSpec, Prompt, PromptError};

/// Default rejection threshold, in natural-log units.
pub const DEFAULT_FLUENCY_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// `{original_id}:{prompt_index}:{rank}`.
    pub id: String,
    pub original_id: String,
    pub revised_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised: Option<Sentence>,
    pub prompt_used: Prompt,
    pub blanks: BlankSpec,
    /// Code recomputed from the generated pair.
    pub code: ControlCode,
    pub fills: Vec<String>,
    #[serde(default)]
    pub fluency_delta_sentence: Option<f64>,
    #[serde(default)]
    pub fluency_delta_chunk: Option<f64>,
    #[serde(default)]
    pub prediction: Option<PredictionRecord>,
    #[serde(default)]
    pub original_prediction: Option<PredictionRecord>,
    pub kept: bool,
    /// Scoring failed; the candidate is held back rather than kept.
    #[serde(default)]
    pub undecided: bool,
    pub prompt_index: usize,
    pub rank: usize,
}

impl Candidate {
    /// The (original, revision) pair; falls back to a shallow parse of the text.
    pub fn perturbation(&self, x: &Sentence) -> Perturbation {
        let revised = self.revised.clone().unwrap_or_else(|| Sentence::shallow(format!("{}.rev", self.id), &self.revised_text));
        let mut p = Perturbation::new(x.clone(), revised);
        p.code = Some(self.code);
        p
    }
}

/// One line of candidate JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub id: String,
    pub original_id: String,
    pub revised_text: String,
    pub code: ControlCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_code: Option<ControlCode>,
    pub fills: Vec<String>,
    pub fluency_delta_sentence: Option<f64>,
    pub fluency_delta_chunk: Option<f64>,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undecided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_label: Option<usize>,
}

impl From<&Candidate> for CandidateRow {
    fn from(c: &Candidate) -> Self {
        CandidateRow {
            id: c.id.clone(),
            original_id: c.original_id.clone(),
            revised_text: c.revised_text.clone(),
            code: c.code,
            requested_code: c.prompt_used.code,
            fills: c.fills.clone(),
            fluency_delta_sentence: c.fluency_delta_sentence,
            fluency_delta_chunk: c.fluency_delta_chunk,
            kept: c.kept,
            undecided: c.undecided,
            label: c.prediction.as_ref().map(|p| p.label),
            original_label: c.original_prediction.as_ref().map(|p| p.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("all {} prompts failed; first: {}", .0.len(), .0.first().map(|f| f.error.as_str()).unwrap_or(""))]
    AllFailed(Vec<PromptFailure>),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl PipelineError {
    /// Whether the failure came from an unavailable backend.
    pub fn is_backend(&self) -> bool {
        match self {
            PipelineError::Backend(_) => true,
            PipelineError::AllFailed(f) => f.iter().any(|x| x.backend),
            PipelineError::Prompt(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFailure {
    pub prompt_index: usize,
    pub prompt: String,
    pub error: String,
    /// Backend fault (as opposed to unparseable output).
    pub backend: bool,
    pub retryable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub params: GenerationParams,
    pub blanks: BlankConfig,
    /// Seed for blank placement.
    pub seed: u64,
    pub max_in_flight: usize,
    pub fluency_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            params: GenerationParams::default(),
            blanks: BlankConfig::default(),
            seed: 0,
            max_in_flight: 8,
            fluency_threshold: DEFAULT_FLUENCY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationRun {
    pub candidates: Vec<Candidate>,
    pub failures: Vec<PromptFailure>,
}

/// Runs `f` over `0..n` on at most `limit` threads, returning results in index order.
pub fn bounded_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, limit: usize, f: F) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..limit.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|s| s.expect("every index is processed"))
        .collect()
}

/// Issues one prompt per (code, blank spec) and collects parsed, deduplicated candidates.
pub fn generate_candidates(
    x: &Sentence,
    codes: Option<&[ControlCode]>,
    blanks: Option<&[BlankSpec]>,
    generator: &dyn Generator,
    classifier: &ClassifierConfig,
    cfg: &PipelineConfig,
) -> Result<GenerationRun, PipelineError> {
    cfg.params.validate()?;
    let codes: Vec<ControlCode> = codes.map(<[_]>::to_vec).unwrap_or_else(|| ControlCode::STEERABLE.to_vec());
    let specs: Vec<BlankSpec> = match blanks {
        Some(b) => b.to_vec(),
        None => enumerate_blanks(x, None, BlankMode::Generation, cfg.seed, &cfg.blanks)?,
    };
    for s in &specs {
        s.check(x)?;
    }
    let prompts: Vec<(Prompt, &BlankSpec)> = codes
        .iter()
        .flat_map(|c| specs.iter().map(move |s| (Prompt::for_generation(x, Some(*c), s), s)))
        .collect();
    let wires: Vec<String> = prompts.iter().map(|(p, _)| p.render()).collect::<Result<_, _>>()?;

    let results = bounded_map(wires.len(), cfg.max_in_flight, |i| generator.generate(&wires[i], &cfg.params));

    let mut run = GenerationRun::default();
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(normalize_spaces(&x.text));
    let mut any_ok = false;
    for (pi, result) in results.into_iter().enumerate() {
        let (prompt, spec) = &prompts[pi];
        let outputs = match result {
            Ok(o) => {
                any_ok = true;
                o
            }
            Err(e) => {
                tracing::debug!(prompt = %wires[pi], error = %e, "generation failed");
                run.failures.push(PromptFailure {
                    prompt_index: pi,
                    prompt: wires[pi].clone(),
                    error: e.to_string(),
                    backend: true,
                    retryable: e.retryable(),
                });
                continue;
            }
        };
        let template = prompt.blanked_template.as_deref().unwrap_or_default();
        for (rank, out) in outputs.iter().enumerate() {
            let fills = match split_fills(out) {
                Ok(f) if f.len() == spec.ranges().len() => f,
                Ok(f) => {
                    run.failures.push(parse_failure(pi, &wires[pi], PromptError::FillCount {
                        blanks: spec.ranges().len(),
                        fills: f.len(),
                        raw: out.clone(),
                    }));
                    continue;
                }
                Err(e) => {
                    run.failures.push(parse_failure(pi, &wires[pi], e));
                    continue;
                }
            };
            let text = fill_template(template, &fills);
            if text.is_empty() || !seen.insert(text.clone()) {
                continue;
            }
            let id = format!("{}:{pi}:{rank}", x.id);
            let revised = project(x, spec, &fills, &text, &id);
            let code = primary_code(&Perturbation::new(x.clone(), revised.clone()), classifier);
            run.candidates.push(Candidate {
                id,
                original_id: x.id.clone(),
                revised_text: text,
                revised: Some(revised),
                prompt_used: prompt.clone(),
                blanks: (*spec).clone(),
                code,
                fills,
                fluency_delta_sentence: None,
                fluency_delta_chunk: None,
                prediction: None,
                original_prediction: None,
                kept: false,
                undecided: false,
                prompt_index: pi,
                rank,
            });
        }
    }
    if !any_ok && !wires.is_empty() {
        return Err(PipelineError::AllFailed(run.failures));
    }
    Ok(run)
}

fn parse_failure(pi: usize, wire: &str, e: PromptError) -> PromptFailure {
    PromptFailure { prompt_index: pi, prompt: wire.to_string(), error: e.to_string(), backend: false, retryable: false }
}

/// Parse of the revision projected from `x`; a shallow parse when the splice
/// does not reproduce the generated text.
fn project(x: &Sentence, spec: &BlankSpec, fills: &[String], text: &str, id: &str) -> Sentence {
    let replacements: Vec<(TokenRange, String)> = spec.ranges().iter().cloned().zip(fills.iter().cloned()).collect();
    match x.splice(format!("{id}.rev"), &replacements) {
        Ok(s) if s.text == text => s,
        _ => Sentence::shallow(format!("{id}.rev"), text),
    }
}

/// Keep rule: neither the sentence nor the chunk score drops by more than `threshold`.
pub fn passes_fluency(delta_sentence: f64, delta_chunk: f64, threshold: f64) -> bool {
    delta_sentence.min(delta_chunk) >= -threshold
}

/// Log-probability per sentence token: backend tokens are located in the text
/// by character offset and summed into the word they start in.
pub fn word_logprobs(s: &Sentence, score: &crate::backends::FluencyScore) -> Vec<f64> {
    let text = s.render();
    let offsets = s.char_offsets();
    let mut out = vec![0.0; s.len()];
    let mut cursor_byte = 0;
    for (tok, lp) in &score.token_logprobs {
        let needle = tok.trim();
        let start_byte = match (!needle.is_empty()).then(|| text[cursor_byte..].find(needle)).flatten() {
            Some(f) => {
                let at = cursor_byte + f;
                cursor_byte = at + needle.len();
                at
            }
            None => cursor_byte,
        };
        let start_char = text[..start_byte].chars().count();
        let k = offsets
            .iter()
            .position(|r| start_char < r.end)
            .unwrap_or(s.len().saturating_sub(1));
        if let Some(slot) = out.get_mut(k) {
            *slot += lp;
        }
    }
    out
}

/// Sentence and chunk deltas of a candidate against the original.
pub fn fluency_deltas(
    p: &Perturbation,
    original: &crate::backends::FluencyScore,
    revised: &crate::backends::FluencyScore,
) -> (f64, f64) {
    let ds = revised.total_logprob - original.total_logprob;
    let wx = word_logprobs(&p.original, original);
    let wy = word_logprobs(&p.revised, revised);
    let removed: f64 = p.edits.iter().flat_map(|e| e.x_range.clone()).map(|i| wx[i]).sum();
    let added: f64 = p.edits.iter().flat_map(|e| e.xhat_range.clone()).map(|j| wy[j]).sum();
    (ds, added - removed)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<Candidate>,
    /// Rejected and undecided candidates (the latter flagged).
    pub rejected: Vec<Candidate>,
}

/// Scores `x` and every candidate and partitions them by the fluency rule.
/// Candidates that cannot be scored are marked undecided and rejected.
pub fn fluency_filter(x: &Sentence, cands: Vec<Candidate>, scorer: &dyn Scorer, threshold: f64) -> FilterOutcome {
    let mut texts = Vec::with_capacity(cands.len() + 1);
    texts.push(x.render());
    texts.extend(cands.iter().map(|c| revised_of(c).render()));
    let scores: Vec<Option<crate::backends::FluencyScore>> = match scorer.score(&texts) {
        Ok(s) if s.len() == texts.len() => s.into_iter().map(Some).collect(),
        _ => texts
            .iter()
            .map(|t| scorer.score(std::slice::from_ref(t)).ok().and_then(|mut v| v.pop()))
            .collect(),
    };
    let mut out = FilterOutcome::default();
    let base = scores[0].clone();
    for (c, score) in cands.into_iter().zip(scores.into_iter().skip(1)) {
        let mut c = c;
        match (&base, score) {
            (Some(b), Some(s)) => {
                let p = Perturbation::new(x.clone(), revised_of(&c));
                let (ds, dc) = fluency_deltas(&p, b, &s);
                c.fluency_delta_sentence = Some(ds);
                c.fluency_delta_chunk = Some(dc);
                c.kept = passes_fluency(ds, dc, threshold);
                c.undecided = false;
            }
            _ => {
                c.kept = false;
                c.undecided = true;
            }
        }
        if c.kept {
            out.kept.push(c);
        } else {
            out.rejected.push(c);
        }
    }
    out
}

fn revised_of(c: &Candidate) -> Sentence {
    c.revised.clone().unwrap_or_else(|| Sentence::shallow(format!("{}.rev", c.id), &c.revised_text))
}

/// Attaches task-model predictions for the original and every candidate.
pub fn attach_predictions(
    x: &Sentence,
    cands: &mut [Candidate],
    predictor: &dyn Predictor,
    frame: &TaskFrame,
) -> Result<PredictionRecord, BackendError> {
    let mut inputs = Vec::with_capacity(cands.len() + 1);
    inputs.push(frame.frame(&x.text));
    inputs.extend(cands.iter().map(|c| frame.frame(&c.revised_text)));
    let mut preds = predictor.predict(&inputs)?.into_iter();
    let original = preds.next().ok_or_else(|| BackendError::Shape("empty prediction batch".into()))?;
    for (c, p) in cands.iter_mut().zip(preds) {
        c.prediction = Some(p);
        c.original_prediction = Some(original.clone());
    }
    Ok(original)
}
