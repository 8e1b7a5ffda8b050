use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use cfkit_core::corpus::parse_conllu_str;
use cfkit_core::pipeline::Candidate;
use cfkit_core::selection::{contrast_partition, Labeled};
use cfkit_core::workflow::{self, MiningOptions, MiningRun};
use cfkit_core::{Dataset, Sentence};
use chrono::Utc;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::session::{
    AnalysisSession, CreateSessionRequest, GenerateRequest, GenerateResponse, SelectionRecord, SelectionRequest,
    SelectionResult, SentenceView, SessionSummary, StrategyName, TemplatesRequest,
};
use crate::state::{AppState, SessionEntry};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/sentences", get(sentences))
        .route("/v1/sessions/{id}/generate", post(generate))
        .route("/v1/sessions/{id}/selections", post(run_selection))
        .route("/v1/sessions/{id}/templates", post(mine_templates))
        .fallback(|| async { ApiError::not_found("route", "") })
        .with_state(state)
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::validation(e.body_text())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn sentence<'a>(ds: &'a Dataset, id: &str) -> Result<&'a Sentence, ApiError> {
    ds.get(id).ok_or_else(|| ApiError::not_found("sentence", id))
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION"), "sessions": st.list().len() }))
}

async fn create_session(
    State(st): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<AnalysisSession>), ApiError> {
    let Json(req) = body?;
    let s = blocking(move || {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = match (req.dataset_path, req.conllu) {
            (Some(p), None) => std::path::absolute(&p).map_err(|e| ApiError::validation(format!("{}: {e}", p.display())))?,
            (None, Some(text)) => {
                parse_conllu_str(&text).map_err(|e| ApiError::validation(e.to_string()))?;
                st.store.save_dataset(&id, &text)?
            }
            _ => return Err(ApiError::validation("give exactly one of dataset_path or conllu")),
        };
        st.dataset(&path)?;
        let s = AnalysisSession::new(id, path);
        st.insert(s.clone())?;
        Ok(s)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(st.list().iter().map(|s| s.summary()).collect())
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<AnalysisSession>, ApiError> {
    Ok(Json((*st.entry(&id)?.snapshot()).clone()))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let entry = st.entry(&id)?;
    let _guard = entry.write.lock().await;
    if entry.is_deleted() {
        return Err(ApiError::not_found("session", &id));
    }
    let entry2 = entry.clone();
    blocking(move || Ok(st.remove(&entry2, &id)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn sentences(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<SentenceView>>, ApiError> {
    let snap = st.entry(&id)?.snapshot();
    blocking(move || {
        let ds = st.dataset(&snap.dataset_ref)?;
        Ok(Json(
            ds.originals()
                .into_iter()
                .map(|s| SentenceView {
                    id: s.id.clone(),
                    text: s.text.clone(),
                    tokens: s.tokens.iter().map(|t| t.surface.clone()).collect(),
                    candidates: snap.candidates.get(&s.id).map_or(0, Vec::len),
                })
                .collect(),
        ))
    })
    .await
}

/// Runs `f` on a copy of the session under its write lock and persists the result.
async fn mutate<T: Send + 'static>(
    st: AppState,
    id: &str,
    f: impl FnOnce(&AppState, &Dataset, &mut AnalysisSession) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let entry: Arc<SessionEntry> = st.entry(id)?;
    let _guard = entry.write.lock().await;
    if entry.is_deleted() {
        return Err(ApiError::not_found("session", id));
    }
    let snap = entry.snapshot();
    let entry2 = entry.clone();
    blocking(move || {
        let ds = st.dataset(&snap.dataset_ref)?;
        let mut s = (*snap).clone();
        let out = f(&st, &ds, &mut s)?;
        s.touch();
        st.commit(&entry2, s)?;
        Ok(out)
    })
    .await
}

async fn generate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let Json(req) = body?;
    if req.codes.as_ref().is_some_and(Vec::is_empty) {
        return Err(ApiError::validation("codes must not be empty when given"));
    }
    let resp = mutate(st, &id, move |st, ds, s| {
        let x = sentence(ds, &req.sentence_id)?;
        let mut cfg = st.config.pipeline.clone();
        if let Some(seed) = req.seed {
            cfg.seed = seed;
            cfg.params.seed = Some(seed);
        }
        let blanks = req.blanks.as_deref().map(|r| workflow::blanks_from_ranges(x, r)).transpose()?;
        let run = workflow::perturb(
            x,
            req.codes.as_deref(),
            blanks.as_ref().map(std::slice::from_ref),
            &st.backends,
            &st.classifier,
            &cfg,
            &st.config.task.frame,
        )?;
        s.candidates.insert(x.id.clone(), run.candidates.clone());
        match &run.original_prediction {
            Some(p) => s.original_predictions.insert(x.id.clone(), p.clone()),
            None => s.original_predictions.remove(&x.id),
        };
        Ok(GenerateResponse {
            sentence_id: x.id.clone(),
            candidates: run.candidates,
            failures: run.failures,
            original_prediction: run.original_prediction,
        })
    })
    .await?;
    Ok(Json(resp))
}

fn pool<'a>(s: &'a AnalysisSession, sentence_id: Option<&str>) -> Vec<(&'a String, &'a Vec<Candidate>)> {
    s.candidates.iter().filter(|(k, _)| sentence_id.is_none_or(|id| id == k.as_str())).collect()
}

async fn run_selection(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SelectionRequest>, JsonRejection>,
) -> Result<Json<SelectionRecord>, ApiError> {
    let Json(req) = body?;
    if req.strategy == StrategyName::Surprise {
        if req.sentence_id.is_none() {
            return Err(ApiError::validation("surprise selection needs a sentence_id"));
        }
        if req.attribution.is_none() {
            return Err(ApiError::validation("surprise selection needs an attribution map"));
        }
    }
    let rec = mutate(st, &id, move |st, ds, s| {
        if let Some(sid) = &req.sentence_id {
            sentence(ds, sid)?;
        }
        let result = match req.strategy {
            StrategyName::Diversity => {
                let k = req.k.unwrap_or(st.config.selection.k);
                let w = req.weights.unwrap_or(st.config.selection.weights);
                let mut picked = BTreeMap::new();
                for (sid, cands) in pool(s, req.sentence_id.as_deref()) {
                    let x = sentence(ds, sid)?;
                    picked.insert(sid.clone(), workflow::select_diverse(x, cands, k, &w)?);
                }
                SelectionResult::Diversity { k, picked }
            }
            StrategyName::Surprise => {
                let sid = req.sentence_id.clone().unwrap_or_default();
                let x = sentence(ds, &sid)?;
                let cands = s
                    .candidates
                    .get(&sid)
                    .ok_or_else(|| ApiError::validation(format!("no candidates generated for {sid}")))?;
                let attribution = req.attribution.as_ref().expect("checked above");
                SelectionResult::Surprise { sentence_id: sid.clone(), result: workflow::select_surprising(x, attribution, cands)? }
            }
            StrategyName::Contrast => {
                let mut rows = Vec::new();
                for (sid, cands) in pool(s, req.sentence_id.as_deref()) {
                    for c in cands.iter().filter(|c| c.kept) {
                        let label = match &req.labels {
                            Some(m) => m.get(&c.id).cloned(),
                            None => c.prediction.as_ref().map(|p| p.label.to_string()),
                        };
                        let original_label = match &req.original_labels {
                            Some(m) => m.get(sid).cloned(),
                            None => c.original_prediction.as_ref().map(|p| p.label.to_string()),
                        };
                        rows.push(Labeled { item: c.id.clone(), label, original_label });
                    }
                }
                let part = contrast_partition(rows, String::clone).map_err(|e| ApiError::validation(e.to_string()))?;
                SelectionResult::Contrast { kept: part.kept, dropped: part.dropped }
            }
        };
        let name = req.name.clone().unwrap_or_else(|| req.strategy.as_str().to_string());
        let rec = SelectionRecord { name: name.clone(), created: Utc::now(), result };
        s.selections.insert(name, rec.clone());
        Ok(rec)
    })
    .await?;
    Ok(Json(rec))
}

async fn mine_templates(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TemplatesRequest>, JsonRejection>,
) -> Result<Json<MiningRun>, ApiError> {
    let Json(req) = body?;
    let run = mutate(st, &id, move |st, ds, s| {
        let mut opts = MiningOptions::from(&st.config.templates);
        if let Some(b) = req.budget {
            opts.budget = b;
        }
        let ids: Option<BTreeSet<&String>> = req.sentence_ids.as_ref().map(|v| v.iter().collect());
        let cands: Vec<Candidate> = s
            .candidates
            .iter()
            .filter(|(k, _)| ids.as_ref().is_none_or(|ids| ids.contains(k)))
            .flat_map(|(_, v)| v.iter())
            .filter(|c| req.codes.as_ref().is_none_or(|codes| codes.contains(&c.code)))
            .filter(|c| {
                req.original_label.is_none_or(|l| c.original_prediction.as_ref().is_some_and(|p| p.label == l))
            })
            .cloned()
            .collect();
        let run = workflow::mine(|id| ds.get(id), &cands, &opts)?;
        s.templates = run.reports.clone();
        Ok(run)
    })
    .await?;
    Ok(Json(run))
}
