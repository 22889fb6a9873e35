//! Streaming inference, translation and news-content service over the
//! `sanvaad` library. Every response is the library's own output for the
//! same input; the service adds transport, limits and configuration.

pub mod config;
pub mod messages;
pub mod server;

use std::path::PathBuf;
use std::sync::Arc;

pub use config::ServiceConfig;
pub use server::{router, AppState};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invalid config file {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("environment variable {var}={value:?} is not valid")]
    Env { var: &'static str, value: String },

    #[error("{what} not found at {path}")]
    Missing { what: &'static str, path: PathBuf },

    #[error("failed to load {what} from {path}: {source}")]
    Load {
        what: &'static str,
        path: PathBuf,
        source: sanvaad::Error,
    },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("cannot bind {address}: {source}")]
    Bind {
        address: String,
        source: std::io::Error,
    },
}

/// Loads the configured artifacts and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(&cfg)?);
    let address = cfg.bind_address();
    let listener = tokio::net::TcpListener::bind(&address)
        .await
        .map_err(|source| ServiceError::Bind {
            address: address.clone(),
            source,
        })?;
    tracing::info!(%address, model = %cfg.model.display(), phrases = state.dictionary.len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| ServiceError::Bind { address, source })
}
