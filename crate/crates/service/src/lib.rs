//! HTTP back end: classify uploaded recordings, persist diagnosis reports and
//! e-mail them to clinicians.
//!
//! | Method | Path | Success |
//! |--------|------|---------|
//! | POST | `/api/v1/classify?organ=heart\|lung\|auto` (WAV body) | 200 classification JSON |
//! | POST | `/api/v1/reports` (JSON) | 201 `{report_id}` |
//! | GET | `/api/v1/reports/{id}` | 200 stored document |
//! | POST | `/api/v1/reports/{id}/email` (`{to}`) | 202 |
//! | GET | `/api/v1/health` | 200 `{status, model_version}` |
//! | GET | `/api/v1/classes` | 200 class list |
//!
//! Errors are JSON bodies `{error, message, fields?}` where `error` is a
//! stable machine-readable code.

pub mod config;
pub mod email;
pub mod error;
pub mod reports;
mod routes;

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use ausc_core::Classifier;

pub use config::{ServiceConfig, SmtpConfig, TlsMode};
pub use email::{MailError, Mailer};
pub use error::{ApiError, ConfigError};
pub use reports::{DiagnosisReport, OrganHint, PatientMeta, ReportStore};
pub use routes::{router, ClassifyResponse, MAX_UPLOAD_BYTES};

/// Shared request state. The classifier is immutable once published; a
/// reload swaps the whole `Arc` under a short exclusive write lock, so
/// in-flight requests finish on the model they started with.
pub struct AppState {
    classifier: RwLock<Option<Arc<Classifier<f32>>>>,
    model_path: Option<PathBuf>,
    store: ReportStore,
    mailer: Option<Mailer>,
}

impl AppState {
    pub fn new(store: ReportStore, mailer: Option<Mailer>) -> Self {
        Self { classifier: RwLock::new(None), model_path: None, store, mailer }
    }

    /// Build state from configuration. A model that fails to load is logged
    /// and the service starts degraded rather than refusing to start.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let store = ReportStore::open(cfg.data_dir.join("reports")).map_err(|source| StartupError::DataDir { path: cfg.data_dir.clone(), source })?;
        let mailer = cfg.smtp.as_ref().map(Mailer::new).transpose()?;
        let mut state = Self::new(store, mailer);
        state.model_path = cfg.model_path.clone();
        if let Some(path) = &cfg.model_path {
            if let Err(e) = state.load_model(path) {
                tracing::error!("model {} not loaded: {e}; serving degraded", path.display());
            }
        }
        Ok(state)
    }

    pub fn classifier(&self) -> Option<Arc<Classifier<f32>>> {
        self.classifier.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Publish a new model (or withdraw it with `None`).
    pub fn set_classifier(&self, c: Option<Classifier<f32>>) {
        *self.classifier.write().unwrap_or_else(|p| p.into_inner()) = c.map(Arc::new);
    }

    /// Load an artifact and publish it; on error the current model stays.
    pub fn load_model(&self, path: &Path) -> ausc_core::Result<String> {
        let c = Classifier::<f32>::load(path)?;
        let version = c.model_version().to_string();
        self.set_classifier(Some(c));
        tracing::info!("model {} loaded (version {version})", path.display());
        Ok(version)
    }

    /// Re-read the configured model path, if any.
    pub fn reload(&self) -> Option<ausc_core::Result<String>> {
        self.model_path.as_deref().map(|p| self.load_model(p))
    }

    pub fn store(&self) -> &ReportStore {
        &self.store
    }

    pub fn mailer(&self) -> Option<&Mailer> {
        self.mailer.as_ref()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot use data directory {}: {source}", path.display())]
    DataDir { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Mail(#[from] MailError),
    #[error("cannot bind {0}: {1}")]
    Bind(std::net::SocketAddr, std::io::Error),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Run the service until Ctrl-C. On Unix, SIGHUP reloads the model file.
pub async fn serve(cfg: ServiceConfig) -> Result<(), StartupError> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let listener = tokio::net::TcpListener::bind(cfg.bind_addr).await.map_err(|e| StartupError::Bind(cfg.bind_addr, e))?;
    tracing::info!("listening on http://{}", listener.local_addr().map_err(StartupError::Serve)?);
    spawn_reload_on_hangup(state.clone());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
        .map_err(StartupError::Serve)
}

#[cfg(unix)]
fn spawn_reload_on_hangup(state: Arc<AppState>) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let st = state.clone();
            match tokio::task::spawn_blocking(move || st.reload()).await {
                Ok(Some(Err(e))) => tracing::error!("model reload failed, keeping current model: {e}"),
                Ok(None) => tracing::warn!("SIGHUP received but no model path is configured"),
                _ => {}
            }
        }
    });
}

#[cfg(not(unix))]
fn spawn_reload_on_hangup(_state: Arc<AppState>) {}
