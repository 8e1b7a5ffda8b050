//! Intrinsic evaluation: closeness, diversity and control success.

pub mod bleu;
pub mod ted;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::ctrlcode::ControlCode;
use crate::diff::levenshtein_norm;

pub use bleu::{self_bleu, sentence_bleu};
pub use ted::{tree_edit_distance, zhang_shasha, LabelMode, Tree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no candidate sets given")]
    Empty,
    #[error("self-BLEU needs a set with at least two revisions")]
    TooFewForSelfBleu,
}

/// Recomputed codes of the generations returned for one requested code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub requested: ControlCode,
    pub recomputed: Vec<ControlCode>,
}

/// Share of requests whose first `per_request` generations include the requested code.
pub fn control_success_rate(requests: &[ControlRequest], per_request: usize) -> f64 {
    if requests.is_empty() {
        return 0.0;
    }
    let hits = requests
        .iter()
        .filter(|r| r.recomputed.iter().take(per_request).any(|c| *c == r.requested))
        .count();
    hits as f64 / requests.len() as f64
}

/// An original and the revisions generated for it.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub original: Sentence,
    pub revisions: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceReport {
    pub original_id: String,
    pub revisions: usize,
    pub self_bleu: Option<f64>,
    pub mean_levenshtein: f64,
    pub mean_tree_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicReport {
    /// Mean of per-original self-BLEU over sets with two or more revisions.
    pub self_bleu: f64,
    /// Means over every (original, revision) pair.
    pub mean_levenshtein: f64,
    pub mean_tree_distance: f64,
    pub pairs: usize,
    pub label_mode: LabelMode,
    pub per_sentence: Vec<SentenceReport>,
}

pub fn intrinsic_report(sets: &[CandidateSet], mode: LabelMode) -> Result<IntrinsicReport, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut per_sentence = Vec::with_capacity(sets.len());
    let (mut lev_sum, mut ted_sum, mut pairs) = (0.0, 0.0, 0usize);
    for set in sets {
        let levs: Vec<f64> = set.revisions.iter().map(|r| levenshtein_norm(&set.original, r)).collect();
        let teds: Vec<f64> = set.revisions.iter().map(|r| tree_edit_distance(&set.original, r, mode)).collect();
        lev_sum += levs.iter().sum::<f64>();
        ted_sum += teds.iter().sum::<f64>();
        pairs += levs.len();
        let texts: Vec<String> = set.revisions.iter().map(Sentence::render).collect();
        per_sentence.push(SentenceReport {
            original_id: set.original.id.clone(),
            revisions: set.revisions.len(),
            self_bleu: self_bleu(&texts),
            mean_levenshtein: mean(&levs),
            mean_tree_distance: mean(&teds),
        });
    }
    let bleus: Vec<f64> = per_sentence.iter().filter_map(|s| s.self_bleu).collect();
    if bleus.is_empty() {
        return Err(MetricError::TooFewForSelfBleu);
    }
    Ok(IntrinsicReport {
        self_bleu: mean(&bleus),
        mean_levenshtein: if pairs == 0 { 0.0 } else { lev_sum / pairs as f64 },
        mean_tree_distance: if pairs == 0 { 0.0 } else { ted_sum / pairs as f64 },
        pairs,
        label_mode: mode,
        per_sentence,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl IntrinsicReport {
    /// Plain-text table with one summary row.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>9} {:>11} {:>9}", "pairs", "Self-BLEU", "Levenshtein", "Syntactic");
        let _ = writeln!(
            s,
            "{:<10} {:>9.3} {:>11.3} {:>9.3}",
            self.pairs, self.self_bleu, self.mean_levenshtein, self.mean_tree_distance
        );
        s
    }
}
