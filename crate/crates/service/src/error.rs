//! Error types and their HTTP rendering.

use std::collections::BTreeMap;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("environment variable {var} has invalid value {value:?}")]
    Invalid { var: &'static str, value: String },
    #[error("environment variable {var} is required because {because}")]
    Missing { var: &'static str, because: &'static str },
}

/// JSON error body: a stable machine-readable `error` code, a human
/// `message`, and per-field problems for validation failures.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: code, message: message.into(), fields: BTreeMap::new() } }
    }

    pub fn with_fields(mut self, fields: BTreeMap<String, String>) -> Self {
        self.body.fields = fields;
        self
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Map library errors raised while classifying uploaded audio.
impl From<ausc_core::Error> for ApiError {
    fn from(e: ausc_core::Error) -> Self {
        use ausc_core::Error as E;
        match &e {
            E::Decode { .. } => ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "undecodable_audio", e.to_string()),
            E::TooShort { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "too_short", e.to_string()),
            E::UnsupportedRate { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unsupported_sample_rate", e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}
