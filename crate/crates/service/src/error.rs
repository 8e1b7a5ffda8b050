use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use cfkit_core::workflow::WorkflowError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::StoreError;

/// Seconds clients are asked to wait after a backend outage.
pub const RETRY_AFTER_SECS: u64 = 5;

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), detail } }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"), json!({ what: id }))
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message, Value::Null)
    }

    pub fn backend(message: impl Into<String>, detail: Value) -> Self {
        let mut detail = detail;
        if let Value::Object(map) = &mut detail {
            map.insert("retry_after_secs".into(), RETRY_AFTER_SECS.into());
        } else {
            detail = json!({ "retry_after_secs": RETRY_AFTER_SECS });
        }
        Self::new(StatusCode::BAD_GATEWAY, "backend_unavailable", message, detail)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let retry = self.status == StatusCode::BAD_GATEWAY;
        let mut resp = (self.status, Json(self.body)).into_response();
        if retry {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
        }
        resp
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        match &e {
            WorkflowError::UnknownSentence(id) => ApiError::not_found("sentence", id),
            WorkflowError::Pipeline(cfkit_core::pipeline::PipelineError::AllFailed(failures)) if e.is_backend() => {
                ApiError::backend(e.to_string(), json!({ "failures": failures }))
            }
            _ if e.is_backend() => ApiError::backend(e.to_string(), json!({})),
            _ => ApiError::validation(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Dataset { .. } => ApiError::validation(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}
