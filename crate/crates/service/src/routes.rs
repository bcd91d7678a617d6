use std::collections::BTreeMap;
use std::sync::Arc;

use ausc_core::{ClassLabel, Classification};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::cors::{Any, CorsLayer};
use uuid::Uuid;

use crate::email::{parse_recipient, MailError};
use crate::error::ApiError;
use crate::reports::{validate_submission, OrganHint};
use crate::AppState;

/// Upload limit for WAV bodies (about 6 minutes of 44.1 kHz stereo PCM-16).
pub const MAX_UPLOAD_BYTES: usize = 64 << 20;

type AppResult<T> = Result<T, ApiError>;

/// Body of a successful classify call. `label`, `probabilities` and
/// `model_version` are exactly the library's [`Classification`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    #[serde(flatten)]
    pub classification: Classification,
    pub organ_hint: OrganHint,
    /// Hex SHA-256 of the request body, to be quoted in the report.
    pub audio_digest: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET, Method::POST]).allow_headers(Any);
    Router::new()
        .route("/api/v1/classify", post(classify).layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES)))
        .route("/api/v1/reports", post(create_report))
        .route("/api/v1/reports/{id}", get(get_report))
        .route("/api/v1/reports/{id}/email", post(email_report))
        .route("/api/v1/health", get(health))
        .route("/api/v1/classes", get(classes))
        .layer(cors)
        .with_state(state)
}

#[derive(Deserialize)]
struct ClassifyQuery {
    organ: Option<String>,
}

async fn classify(State(state): State<Arc<AppState>>, Query(q): Query<ClassifyQuery>, body: Bytes) -> AppResult<Json<ClassifyResponse>> {
    let organ_hint: OrganHint = q
        .organ
        .as_deref()
        .unwrap_or("auto")
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_organ", e))?;
    let classifier = state
        .classifier()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_not_loaded", "no model is loaded"))?;
    let digest = hex::encode(Sha256::digest(&body));
    let classification = tokio::task::spawn_blocking(move || classifier.classify_wav_bytes(&body, organ_hint.organ()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(ClassifyResponse { classification, organ_hint, audio_digest: digest }))
}

fn io_error(e: std::io::Error) -> ApiError {
    tracing::error!("report store: {e}");
    ApiError::internal(format!("report store: {e}"))
}

async fn create_report(State(state): State<Arc<AppState>>, body: Bytes) -> AppResult<Response> {
    let report = validate_submission(&body)
        .map_err(|fields| ApiError::new(StatusCode::BAD_REQUEST, "invalid_report", "report payload failed validation").with_fields(fields))?;
    let id = report.report_id;
    let st = state.clone();
    tokio::task::spawn_blocking(move || st.store().insert(&report)).await.map_err(|e| ApiError::internal(e.to_string()))?.map_err(io_error)?;
    tracing::info!("report {id} stored");
    Ok((StatusCode::CREATED, [(header::LOCATION, format!("/api/v1/reports/{id}"))], Json(json!({ "report_id": id }))).into_response())
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "report_not_found", format!("no report with id {id:?}"))
}

async fn get_report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Response> {
    let uuid = Uuid::parse_str(&id).map_err(|_| not_found(&id))?;
    let bytes = state.store().get_raw(uuid).map_err(io_error)?.ok_or_else(|| not_found(&id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn email_report(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> AppResult<Response> {
    let uuid = Uuid::parse_str(&id).map_err(|_| not_found(&id))?;
    let report = state.store().get(uuid).map_err(io_error)?.ok_or_else(|| not_found(&id))?;

    #[derive(Deserialize)]
    struct EmailRequest {
        to: String,
    }
    let bad = |field: &str, msg: String| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_email_request", msg.clone()).with_fields(BTreeMap::from([(field.to_string(), msg)]))
    };
    let req: EmailRequest = serde_json::from_slice(&body).map_err(|e| bad("to", format!("expected {{\"to\": address}}: {e}")))?;
    let to = parse_recipient(&req.to).map_err(|e| bad("to", e.to_string()))?;

    let mailer = state
        .mailer()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "smtp_not_configured", "e-mail delivery is not configured"))?;
    match mailer.send_report(&report, to).await {
        Ok(()) => {
            tracing::info!("report {uuid} e-mailed");
            Ok((StatusCode::ACCEPTED, Json(json!({ "report_id": uuid, "to": req.to.trim(), "status": "sent" }))).into_response())
        }
        Err(e @ MailError::Smtp(_)) => {
            tracing::warn!("report {uuid}: {e}");
            Err(ApiError::new(StatusCode::BAD_GATEWAY, "smtp_failed", e.to_string()))
        }
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(match state.classifier() {
        Some(c) => json!({ "status": "ok", "model_version": c.model_version() }),
        None => json!({ "status": "degraded", "model_version": null }),
    })
}

async fn classes() -> Json<serde_json::Value> {
    let list: Vec<_> = ClassLabel::ALL
        .iter()
        .map(|c| json!({ "index": c.index(), "label": c.token(), "name": c.full_name(), "organ": c.organ() }))
        .collect();
    Json(json!(list))
}
