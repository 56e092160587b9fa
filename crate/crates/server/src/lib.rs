//! HTTP binding for decomp-core sessions.
//!
//! Commands are JSON over HTTP. Each session also has a server-sent event
//! stream carrying its event log; clients dedup by `seq` and reconnect with
//! `Last-Event-ID`. Session work runs on the blocking pool, one call at a time
//! per session.

mod error;
mod hub;
mod routes;

use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use decomp_core::llm::Provider;
use decomp_core::service::{ServiceConfig, ServiceError, SessionManager};
use tower_http::services::{ServeDir, ServeFile};
use tower_http::trace::TraceLayer;

pub use error::{status_of, ApiError};
pub use hub::Hub;

#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<SessionManager>,
    pub hub: Arc<Hub>,
}

impl AppState {
    pub fn new(config: ServiceConfig, provider: Arc<dyn Provider>) -> Result<Self, ServiceError> {
        let hub = Arc::new(Hub::default());
        let manager = SessionManager::new(config, provider)?.with_sink(hub.clone().sink_factory());
        Ok(Self {
            manager: Arc::new(manager),
            hub,
        })
    }
}

/// The API under `/api`, plus the web client from `static_dir` if given.
pub fn app(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new().nest("/api", routes::api()).with_state(state);
    let router = match static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            router.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => router,
    };
    router.layer(TraceLayer::new_for_http())
}
