//! The generate → filter → predict → select → mine chain shared by the CLI and the service.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{AttributionMap, BackendError, Backends, PredictionRecord, TaskFrame};
use crate::corpus::{Dataset, Sentence, TokenRange};
use crate::ctrlcode::{ClassifierConfig, ControlCode};
use crate::pipeline::{attach_predictions, fluency_filter, generate_candidates, Candidate, PipelineConfig, PipelineError, PromptFailure};
use crate::prompting::BlankSpec;
use crate::selection::{diversity_select_ranked, surprise_select, DiversityWeights, SelectionError, SelectionSignature, SurpriseResult};
use crate::templates::{extract_templates, flip_rates, select_templates, FlipReport, TaggedPerturbation, TemplateError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("unknown sentence {0}")]
    UnknownSentence(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl WorkflowError {
    /// True when the failure came from an unreachable or misbehaving backend.
    pub fn is_backend(&self) -> bool {
        match self {
            WorkflowError::Pipeline(e) => e.is_backend(),
            WorkflowError::Backend(_) => true,
            _ => false,
        }
    }
}

/// Everything one perturbation request produced for a sentence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbRun {
    /// Kept and rejected candidates in prompt order.
    pub candidates: Vec<Candidate>,
    pub failures: Vec<PromptFailure>,
    pub original_prediction: Option<PredictionRecord>,
}

/// Generates candidates for `x` and attaches predictions when a predictor is configured.
pub fn generate(
    x: &Sentence,
    codes: Option<&[ControlCode]>,
    blanks: Option<&[BlankSpec]>,
    backends: &Backends,
    classifier: &ClassifierConfig,
    cfg: &PipelineConfig,
    frame: &TaskFrame,
) -> Result<PerturbRun, WorkflowError> {
    let run = generate_candidates(x, codes, blanks, backends.generator.as_ref(), classifier, cfg)?;
    let mut candidates = run.candidates;
    let original_prediction = match &backends.predictor {
        Some(p) if !candidates.is_empty() => Some(attach_predictions(x, &mut candidates, p.as_ref(), frame)?),
        _ => None,
    };
    Ok(PerturbRun { candidates, failures: run.failures, original_prediction })
}

/// Runs the fluency filter and returns all candidates back in prompt order.
pub fn filter(x: &Sentence, cands: Vec<Candidate>, backends: &Backends, threshold: f64) -> Vec<Candidate> {
    let out = fluency_filter(x, cands, backends.scorer.as_ref(), threshold);
    let mut all: Vec<Candidate> = out.kept.into_iter().chain(out.rejected).collect();
    all.sort_by_key(|c| (c.prompt_index, c.rank));
    all
}

/// Generation followed by filtering: the per-sentence unit of work.
pub fn perturb(
    x: &Sentence,
    codes: Option<&[ControlCode]>,
    blanks: Option<&[BlankSpec]>,
    backends: &Backends,
    classifier: &ClassifierConfig,
    cfg: &PipelineConfig,
    frame: &TaskFrame,
) -> Result<PerturbRun, WorkflowError> {
    let mut run = generate(x, codes, blanks, backends, classifier, cfg, frame)?;
    run.candidates = filter(x, std::mem::take(&mut run.candidates), backends, cfg.fluency_threshold);
    Ok(run)
}

/// Blank specs from explicit `[start, end)` ranges.
pub fn blanks_from_ranges(x: &Sentence, ranges: &[(usize, usize)]) -> Result<BlankSpec, WorkflowError> {
    let mut ranges: Vec<TokenRange> = ranges.iter().map(|&(s, e)| s..e).collect();
    ranges.sort_by_key(|r| (r.start, r.end));
    let spec = BlankSpec::new(ranges).map_err(PipelineError::from)?;
    spec.check(x).map_err(PipelineError::from)?;
    Ok(spec)
}

/// Diverse subset of the kept candidates of one original, as candidate ids.
pub fn select_diverse(x: &Sentence, cands: &[Candidate], k: usize, w: &DiversityWeights) -> Result<Vec<String>, WorkflowError> {
    let pool: Vec<&Candidate> = cands.iter().filter(|c| c.kept).collect();
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let sigs: Vec<SelectionSignature> = pool.iter().map(|c| SelectionSignature::of_candidate(x, c)).collect();
    let rank: Vec<usize> = (0..pool.len()).collect();
    let picked = diversity_select_ranked(&sigs, k, w, &rank)?;
    Ok(picked.into_iter().map(|i| pool[i].id.clone()).collect())
}

/// Surprise selection over the kept candidates of one original.
pub fn select_surprising(x: &Sentence, attribution: &AttributionMap, cands: &[Candidate]) -> Result<SurpriseResult, WorkflowError> {
    let pool: Vec<Candidate> = cands.iter().filter(|c| c.kept).cloned().collect();
    Ok(surprise_select(x, attribution, &pool)?)
}

/// Options for template mining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningOptions {
    pub sparsity: crate::templates::Sparsity,
    pub budget: f64,
}

impl From<&crate::config::TemplateSettings> for MiningOptions {
    fn from(s: &crate::config::TemplateSettings) -> Self {
        MiningOptions { sparsity: s.sparsity.clone(), budget: s.budget }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MiningRun {
    pub reports: Vec<FlipReport>,
    pub universe: usize,
    pub covered: usize,
    pub total_weight: f64,
    pub uncoverable: Vec<String>,
}

/// Extracts templates from kept candidates, covers them greedily and computes flip rates.
pub fn mine<'a>(
    originals: impl Fn(&str) -> Option<&'a Sentence>,
    cands: &[Candidate],
    opts: &MiningOptions,
) -> Result<MiningRun, WorkflowError> {
    let mut tagged = Vec::new();
    let mut preds: BTreeMap<String, (PredictionRecord, PredictionRecord)> = BTreeMap::new();
    for c in cands.iter().filter(|c| c.kept) {
        let x = originals(&c.original_id).ok_or_else(|| WorkflowError::UnknownSentence(c.original_id.clone()))?;
        tagged.push(TaggedPerturbation { candidate_id: c.id.clone(), original_id: c.original_id.clone(), perturbation: c.perturbation(x) });
        if let (Some(p), Some(o)) = (&c.prediction, &c.original_prediction) {
            preds.insert(c.id.clone(), (o.clone(), p.clone()));
        }
    }
    let universe: BTreeSet<String> = tagged.iter().map(|t| t.candidate_id.clone()).collect();
    if universe.is_empty() {
        return Ok(MiningRun::default());
    }
    let templates = extract_templates(&tagged, &opts.sparsity)?;
    let cover = select_templates(&templates, &universe, opts.budget)?;
    Ok(MiningRun {
        reports: flip_rates(&cover.chosen, &preds),
        universe: universe.len(),
        covered: cover.covered.len(),
        total_weight: cover.total_weight,
        uncoverable: cover.uncoverable,
    })
}

/// [`mine`] with originals looked up in a dataset.
pub fn mine_dataset(ds: &Dataset, cands: &[Candidate], opts: &MiningOptions) -> Result<MiningRun, WorkflowError> {
    mine(|id| ds.get(id), cands, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockTask;

    fn kids() -> Sentence {
        Sentence::shallow("kids", "It is great for kids .")
    }

    #[test]
    fn perturb_keeps_prompt_order_and_predicts() {
        let b = Backends::mock(MockTask::Sentiment);
        let run = perturb(&kids(), Some(&[ControlCode::Negation]), None, &b, &ClassifierConfig::default(), &PipelineConfig::default(), &TaskFrame::Single).unwrap();
        assert!(!run.candidates.is_empty());
        let keys: Vec<_> = run.candidates.iter().map(|c| (c.prompt_index, c.rank)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(run.original_prediction.is_some());
        assert!(run.candidates.iter().all(|c| c.prediction.is_some()));
        assert!(run.candidates.iter().any(|c| c.kept));
    }

    #[test]
    fn mining_unknown_original() {
        let b = Backends::mock(MockTask::Sentiment);
        let x = kids();
        let run = perturb(&x, Some(&[ControlCode::Negation]), None, &b, &ClassifierConfig::default(), &PipelineConfig::default(), &TaskFrame::Single).unwrap();
        let opts = MiningOptions::from(&crate::config::TemplateSettings::default());
        let err = mine(|_| None, &run.candidates, &opts).unwrap_err();
        assert!(matches!(err, WorkflowError::UnknownSentence(_)));
        let ok = mine(|_| Some(&x), &run.candidates, &opts).unwrap();
        assert!(ok.covered as f64 >= 0.9 * ok.universe as f64);
    }

    #[test]
    fn explicit_blank_ranges_validated() {
        let x = kids();
        assert!(blanks_from_ranges(&x, &[(2, 3)]).is_ok());
        assert!(blanks_from_ranges(&x, &[(2, 9)]).is_err());
    }
}
