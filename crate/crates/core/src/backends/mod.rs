//! Clients for the three external capabilities: generation, fluency scoring
//! and task-model prediction.

pub mod http;
pub mod mock;
pub mod wire;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{BackendConfig, EmbedClient, HttpBackend};
pub use mock::{MockBackend, MockTask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("{endpoint}: transport failure after {attempts} attempt(s): {message}")]
    Transport { endpoint: String, attempts: u32, message: String },
    #[error("{endpoint}: timed out after {attempts} attempt(s)")]
    Timeout { endpoint: String, attempts: u32 },
    #[error("{endpoint}: backend returned status {status}: {message}")]
    Remote { endpoint: String, status: u16, attempts: u32, message: String },
    #[error("{endpoint}: malformed response: {message}")]
    Malformed { endpoint: String, message: String },
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("no {0} backend configured")]
    NotConfigured(&'static str),
}

impl BackendError {
    /// Whether resending the same request could succeed.
    pub fn retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } | BackendError::Timeout { .. } => true,
            BackendError::Remote { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            BackendError::Transport { attempts, .. }
            | BackendError::Timeout { attempts, .. }
            | BackendError::Remote { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Beam,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub num_return: usize,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { num_return: 5, strategy: Strategy::Beam, beam_width: Some(5), temperature: None, seed: Some(0) }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.num_return == 0 {
            return Err(BackendError::Invalid("num_return must be at least 1".into()));
        }
        if self.strategy == Strategy::Beam && self.beam_width.is_some_and(|w| w < self.num_return) {
            return Err(BackendError::Invalid("beam_width must be at least num_return".into()));
        }
        if self.temperature.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return Err(BackendError::Invalid("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Natural-log probabilities of a text under the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FluencyScore {
    #[serde(rename = "total")]
    pub total_logprob: f64,
    #[serde(rename = "tokens")]
    pub token_logprobs: Vec<(String, f64)>,
}

impl FluencyScore {
    pub fn from_tokens(token_logprobs: Vec<(String, f64)>) -> Self {
        let total_logprob = token_logprobs.iter().map(|(_, lp)| lp).sum();
        FluencyScore { total_logprob, token_logprobs }
    }

    pub fn is_consistent(&self) -> bool {
        let sum: f64 = self.token_logprobs.iter().map(|(_, lp)| lp).sum();
        (sum - self.total_logprob).abs() <= 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub label: usize,
    pub probs: Vec<f64>,
}

impl PredictionRecord {
    /// Builds a record labelled with the argmax (lowest index on ties).
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let label = argmax(&probs);
        PredictionRecord { label, probs }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let sum: f64 = self.probs.iter().sum();
        if self.probs.is_empty() || (sum - 1.0).abs() > 1e-6 || self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BackendError::Invalid(format!("probabilities {:?} do not form a distribution", self.probs)));
        }
        if self.probs[self.label] < self.probs[argmax(&self.probs)] {
            return Err(BackendError::Invalid(format!("label {} is not the argmax", self.label)));
        }
        Ok(())
    }

    /// Probability assigned to `class` (0 when out of range).
    pub fn prob(&self, class: usize) -> f64 {
        self.probs.get(class).copied().unwrap_or(0.0)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in v.iter().enumerate() {
        if *p > v[best] {
            best = i;
        }
    }
    best
}

/// Signed per-token importance weights over the original sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub weights: Vec<f64>,
}

impl AttributionMap {
    pub fn validate(&self, tokens: usize) -> Result<(), BackendError> {
        if self.weights.len() != tokens {
            return Err(BackendError::Shape(format!("{} weights for {tokens} tokens", self.weights.len())));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(BackendError::Invalid("attribution weights must be finite".into()));
        }
        Ok(())
    }
}

/// One task-model input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskInput {
    Single(String),
    Pair { premise: String, hypothesis: String },
    QuestionPair { question1: String, question2: String },
}

/// How a (possibly perturbed) sentence is placed into a task input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskFrame {
    #[default]
    Single,
    Hypothesis { premise: String },
    Premise { hypothesis: String },
    SecondQuestion { question1: String },
}

impl TaskFrame {
    pub fn frame(&self, text: &str) -> TaskInput {
        match self {
            TaskFrame::Single => TaskInput::Single(text.to_string()),
            TaskFrame::Hypothesis { premise } => {
                TaskInput::Pair { premise: premise.clone(), hypothesis: text.to_string() }
            }
            TaskFrame::Premise { hypothesis } => {
                TaskInput::Pair { premise: text.to_string(), hypothesis: hypothesis.clone() }
            }
            TaskFrame::SecondQuestion { question1 } => {
                TaskInput::QuestionPair { question1: question1.clone(), question2: text.to_string() }
            }
        }
    }
}

pub trait Generator: Send + Sync {
    /// At most `params.num_return` raw continuations of `prompt`.
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, BackendError>;
}

pub trait Scorer: Send + Sync {
    fn score(&self, texts: &[String]) -> Result<Vec<FluencyScore>, BackendError>;
}

pub trait Predictor: Send + Sync {
    fn predict(&self, inputs: &[TaskInput]) -> Result<Vec<PredictionRecord>, BackendError>;
}

/// The capabilities a pipeline run needs, shareable across workers.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub scorer: Arc<dyn Scorer>,
    pub predictor: Option<Arc<dyn Predictor>>,
}

impl Backends {
    pub fn mock(task: MockTask) -> Self {
        let mock = Arc::new(MockBackend::new(task));
        Backends { generator: mock.clone(), scorer: mock.clone(), predictor: Some(mock) }
    }

    pub fn http(cfg: &BackendConfig) -> Self {
        let client = Arc::new(HttpBackend::new(cfg.clone()));
        let predictor: Option<Arc<dyn Predictor>> =
            if cfg.predict_url().is_some() { Some(client.clone()) } else { None };
        Backends { generator: client.clone(), scorer: client, predictor }
    }
}
