//! Blocking JSON-over-HTTP clients with bounded retry.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{
    EmbedRequest, EmbedResponse, ErrorBody, GenerateRequest, GenerateResponse, PredictRequest, PredictResponse,
    ScoreRequest, ScoreResponse,
};
use super::{BackendError, FluencyScore, GenerationParams, Generator, PredictionRecord, Predictor, Scorer, TaskInput};
use crate::ctrlcode::Embedder;

pub const ENV_GEN_URL: &str = "CFKIT_GEN_URL";
pub const ENV_SCORE_URL: &str = "CFKIT_SCORE_URL";
pub const ENV_PREDICT_URL: &str = "CFKIT_PREDICT_URL";
pub const ENV_EMBED_URL: &str = "CFKIT_EMBED_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Common prefix; endpoint paths are appended when a specific URL is unset.
    pub base_url: Option<String>,
    pub generate_url: Option<String>,
    pub score_url: Option<String>,
    pub predict_url: Option<String>,
    pub embed_url: Option<String>,
    pub timeout_ms: u64,
    /// Total attempts per request.
    pub attempts: u32,
    pub backoff_ms: u64,
    /// Requests a batch may have in flight at once.
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: None,
            generate_url: None,
            score_url: None,
            predict_url: None,
            embed_url: None,
            timeout_ms: 30_000,
            attempts: 3,
            backoff_ms: 200,
            max_in_flight: 8,
        }
    }
}

impl BackendConfig {
    pub fn with_base(base: impl Into<String>) -> Self {
        BackendConfig { base_url: Some(base.into()), ..Default::default() }
    }

    /// Fills unset endpoint URLs from the `CFKIT_*_URL` environment variables.
    pub fn with_env(mut self) -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        self.generate_url = self.generate_url.or_else(|| var(ENV_GEN_URL));
        self.score_url = self.score_url.or_else(|| var(ENV_SCORE_URL));
        self.predict_url = self.predict_url.or_else(|| var(ENV_PREDICT_URL));
        self.embed_url = self.embed_url.or_else(|| var(ENV_EMBED_URL));
        self
    }

    fn resolve(&self, explicit: &Option<String>, path: &str) -> Option<String> {
        explicit
            .clone()
            .or_else(|| self.base_url.as_ref().map(|b| format!("{}/{path}", b.trim_end_matches('/'))))
    }

    pub fn generate_url(&self) -> Option<String> {
        self.resolve(&self.generate_url, "generate")
    }

    pub fn score_url(&self) -> Option<String> {
        self.resolve(&self.score_url, "score")
    }

    pub fn predict_url(&self) -> Option<String> {
        self.resolve(&self.predict_url, "predict")
    }

    pub fn embed_url(&self) -> Option<String> {
        self.embed_url.clone()
    }
}

/// Shared transport: one agent, retry with exponential backoff.
#[derive(Debug, Clone)]
struct Transport {
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl Transport {
    fn new(cfg: &BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Transport { agent, attempts: cfg.attempts.max(1), backoff: Duration::from_millis(cfg.backoff_ms) }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(url, body, attempt) {
                Ok(r) => return Ok(r),
                Err(e) if e.retryable() && attempt < self.attempts => {
                    tracing::debug!(url, attempt, error = %e, "backend request failed, retrying");
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B, attempt: u32) -> Result<R, BackendError> {
        let endpoint = url.to_string();
        let mut resp = self.agent.post(url).send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { endpoint: endpoint.clone(), attempts: attempt },
            other => BackendError::Transport { endpoint: endpoint.clone(), attempts: attempt, message: other.to_string() },
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
            return Err(BackendError::Remote { endpoint, status, attempts: attempt, message });
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| BackendError::Malformed { endpoint, message: e.to_string() })
    }
}

/// HTTP client for the generation, scoring and prediction endpoints.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    cfg: BackendConfig,
    transport: Transport,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Self {
        let transport = Transport::new(&cfg);
        HttpBackend { cfg, transport }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }
}

impl Generator for HttpBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, BackendError> {
        params.validate()?;
        let url = self.cfg.generate_url().ok_or(BackendError::NotConfigured("generation"))?;
        let req = GenerateRequest { prompt: prompt.to_string(), params: params.clone() };
        let resp: GenerateResponse = self.transport.post(&url, &req)?;
        let mut outputs = resp.outputs;
        outputs.truncate(params.num_return);
        Ok(outputs)
    }
}

impl Scorer for HttpBackend {
    fn score(&self, texts: &[String]) -> Result<Vec<FluencyScore>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let url = self.cfg.score_url().ok_or(BackendError::NotConfigured("scoring"))?;
        let resp: ScoreResponse = self.transport.post(&url, &ScoreRequest { texts: texts.to_vec() })?;
        if resp.scores.len() != texts.len() {
            return Err(BackendError::Malformed {
                endpoint: url,
                message: format!("{} scores for {} texts", resp.scores.len(), texts.len()),
            });
        }
        Ok(resp.scores)
    }
}

impl Predictor for HttpBackend {
    fn predict(&self, inputs: &[TaskInput]) -> Result<Vec<PredictionRecord>, BackendError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let url = self.cfg.predict_url().ok_or(BackendError::NotConfigured("prediction"))?;
        let resp: PredictResponse = self.transport.post(&url, &PredictRequest { inputs: inputs.to_vec() })?;
        if resp.predictions.len() != inputs.len() {
            return Err(BackendError::Malformed {
                endpoint: url,
                message: format!("{} predictions for {} inputs", resp.predictions.len(), inputs.len()),
            });
        }
        for p in &resp.predictions {
            p.validate().map_err(|e| BackendError::Malformed { endpoint: url.clone(), message: e.to_string() })?;
        }
        Ok(resp.predictions)
    }
}

/// Sentence-embedding client (`POST {texts} -> {embeddings}`) for semantic-shift ranking.
#[derive(Debug, Clone)]
pub struct EmbedClient {
    url: String,
    transport: Transport,
}

impl EmbedClient {
    pub fn new(url: impl Into<String>, cfg: &BackendConfig) -> Self {
        EmbedClient { url: url.into(), transport: Transport::new(cfg) }
    }
}

impl Embedder for EmbedClient {
    fn embed(&self, texts: &[String]) -> Option<Vec<Vec<f32>>> {
        match self.transport.post::<_, EmbedResponse>(&self.url, &EmbedRequest { texts: texts.to_vec() }) {
            Ok(r) if r.embeddings.len() == texts.len() => Some(r.embeddings),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(error = %e, "embedding backend unavailable, using length fallback");
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_resolution() {
        let cfg = BackendConfig::with_base("http://h:1/");
        assert_eq!(cfg.generate_url().as_deref(), Some("http://h:1/generate"));
        let cfg = BackendConfig { score_url: Some("http://s/x".into()), ..cfg };
        assert_eq!(cfg.score_url().as_deref(), Some("http://s/x"));
        assert_eq!(BackendConfig::default().predict_url(), None);
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // port 9 on localhost is reliably closed in test sandboxes
        let cfg = BackendConfig { attempts: 2, backoff_ms: 1, timeout_ms: 2000, ..BackendConfig::with_base("http://127.0.0.1:9") };
        let err = HttpBackend::new(cfg).generate("x <|perturb|>", &GenerationParams::default()).unwrap_err();
        assert!(err.retryable(), "{err}");
        assert_eq!(err.attempts(), 2);
    }

    #[test]
    fn missing_endpoint() {
        let err = HttpBackend::new(BackendConfig::default()).score(&["a".into()]).unwrap_err();
        assert_eq!(err, BackendError::NotConfigured("scoring"));
    }
}
