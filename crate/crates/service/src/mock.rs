//! The mock backend behind the same HTTP protocol the real clients speak.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use cfkit_core::backends::wire::{
    ErrorBody, GenerateRequest, GenerateResponse, PredictRequest, PredictResponse, ScoreRequest, ScoreResponse,
};
use cfkit_core::backends::{BackendError, Generator, MockBackend, MockTask, Predictor, Scorer};

type Reply<T> = Result<Json<T>, (StatusCode, Json<ErrorBody>)>;

fn reject(e: BackendError) -> (StatusCode, Json<ErrorBody>) {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: e.to_string() }))
}

/// Router serving `/generate`, `/score` and `/predict`.
pub fn mock_backend_router(task: MockTask) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/score", post(score))
        .route("/predict", post(predict))
        .with_state(Arc::new(MockBackend::new(task)))
}

async fn generate(State(m): State<Arc<MockBackend>>, Json(req): Json<GenerateRequest>) -> Reply<GenerateResponse> {
    m.generate(&req.prompt, &req.params).map(|outputs| Json(GenerateResponse { outputs })).map_err(reject)
}

async fn score(State(m): State<Arc<MockBackend>>, Json(req): Json<ScoreRequest>) -> Reply<ScoreResponse> {
    m.score(&req.texts).map(|scores| Json(ScoreResponse { scores })).map_err(reject)
}

async fn predict(State(m): State<Arc<MockBackend>>, Json(req): Json<PredictRequest>) -> Reply<PredictResponse> {
    m.predict(&req.inputs).map(|predictions| Json(PredictResponse { predictions })).map_err(reject)
}
