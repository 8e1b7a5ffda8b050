//! Persisted session state and the request/response bodies of the API.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cfkit_core::backends::{AttributionMap, PredictionRecord};
use cfkit_core::pipeline::{Candidate, PromptFailure};
use cfkit_core::selection::{DiversityWeights, SurpriseResult};
use cfkit_core::templates::FlipReport;
use cfkit_core::ControlCode;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSession {
    pub id: String,
    pub dataset_ref: PathBuf,
    /// Original id to its candidates, in prompt order.
    #[serde(default)]
    pub candidates: BTreeMap<String, Vec<Candidate>>,
    #[serde(default)]
    pub original_predictions: BTreeMap<String, PredictionRecord>,
    #[serde(default)]
    pub selections: BTreeMap<String, SelectionRecord>,
    /// Result of the most recent mining request.
    #[serde(default)]
    pub templates: Vec<FlipReport>,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
}

impl AnalysisSession {
    pub fn new(id: String, dataset_ref: PathBuf) -> Self {
        let now = Utc::now();
        AnalysisSession {
            id,
            dataset_ref,
            candidates: BTreeMap::new(),
            original_predictions: BTreeMap::new(),
            selections: BTreeMap::new(),
            templates: Vec::new(),
            created: now,
            updated: now,
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            dataset_ref: self.dataset_ref.clone(),
            sentences: self.candidates.len(),
            candidates: self.candidates.values().map(Vec::len).sum(),
            created: self.created,
            updated: self.updated,
        }
    }

    pub fn touch(&mut self) {
        self.updated = Utc::now().max(self.updated);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub dataset_ref: PathBuf,
    /// Sentences with generated candidates.
    pub sentences: usize,
    pub candidates: usize,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub name: String,
    pub created: DateTime<Utc>,
    #[serde(flatten)]
    pub result: SelectionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SelectionResult {
    /// Chosen candidate ids per original.
    Diversity { k: usize, picked: BTreeMap<String, Vec<String>> },
    Surprise { sentence_id: String, result: SurpriseResult },
    Contrast { kept: Vec<String>, dropped: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Diversity,
    Surprise,
    Contrast,
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Diversity => "diversity",
            StrategyName::Surprise => "surprise",
            StrategyName::Contrast => "contrast",
        }
    }
}

/// Either a server-side path or inline CoNLL-U text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    #[serde(default)]
    pub conllu: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub sentence_id: String,
    #[serde(default)]
    pub codes: Option<Vec<ControlCode>>,
    /// Explicit `[start, end)` token ranges forming one blank spec.
    #[serde(default)]
    pub blanks: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub sentence_id: String,
    pub candidates: Vec<Candidate>,
    pub failures: Vec<PromptFailure>,
    pub original_prediction: Option<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    pub strategy: StrategyName,
    /// Key the result is stored under; defaults to the strategy name.
    #[serde(default)]
    pub name: Option<String>,
    /// Restricts the pool to one original; required for surprise.
    #[serde(default)]
    pub sentence_id: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub weights: Option<DiversityWeights>,
    #[serde(default)]
    pub attribution: Option<AttributionMap>,
    /// Gold labels by candidate id, for contrast; predictions are used when absent.
    #[serde(default)]
    pub labels: Option<BTreeMap<String, String>>,
    /// Gold labels of the originals, by sentence id.
    #[serde(default)]
    pub original_labels: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesRequest {
    #[serde(default)]
    pub sentence_ids: Option<Vec<String>>,
    /// Only candidates whose recomputed code is listed.
    #[serde(default)]
    pub codes: Option<Vec<ControlCode>>,
    /// Only candidates whose original was predicted with this label.
    #[serde(default)]
    pub original_label: Option<usize>,
    #[serde(default)]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub candidates: usize,
}
