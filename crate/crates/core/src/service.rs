//! Session registry shared by transports.
//!
//! Sessions live in `<data_dir>/<id>/`. A session is opened lazily on first
//! use and then kept in memory behind its own mutex, so calls on one session
//! are serialized while different sessions proceed independently.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, ErrorClass, ErrorInfo, EventSink, SessionRuntime, DEFAULT_MAX_SUBGOALS};
use crate::exec::KernelConfig;
use crate::graph::NodeContent;
use crate::llm::provider::from_config;
use crate::llm::{Provider, ProviderConfig, ProviderMode};
use crate::session::{SessionDir, SessionError, SessionExport, SessionState, EVENTS_FILE};
use crate::task::Strategy;

pub type SharedSession = Arc<Mutex<SessionRuntime>>;

/// Builds the event sink for a session id, e.g. a broadcast channel sender.
pub type SinkFactory = Arc<dyn Fn(&str) -> EventSink + Send + Sync>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub provider: ProviderConfig,
    pub kernel: KernelConfig,
    pub max_subgoals: u32,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, provider: ProviderConfig, kernel: KernelConfig) -> Self {
        Self {
            data_dir: data_dir.into(),
            provider,
            kernel,
            max_subgoals: DEFAULT_MAX_SUBGOALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} already exists")]
    SessionExists(String),
    #[error("scripted mode needs a fixture directory")]
    NoFixtures,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<SessionError> for ServiceError {
    fn from(e: SessionError) -> Self {
        ServiceError::Engine(e.into())
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::SessionExists(_) => "SessionExists",
            ServiceError::NoFixtures => "NoFixtures",
            ServiceError::Engine(e) => e.code(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            ServiceError::UnknownSession(_) => ErrorClass::NotFound,
            ServiceError::SessionExists(_) => ErrorClass::Conflict,
            ServiceError::NoFixtures => ErrorClass::Invalid,
            ServiceError::Engine(e) => e.class(),
        }
    }

    pub fn info(&self) -> ErrorInfo {
        match self {
            ServiceError::Engine(e) => e.info(),
            other => ErrorInfo {
                code: other.code().to_string(),
                message: other.to_string(),
                request_hash: None,
            },
        }
    }
}

/// Listing entry; cheap to build from a state without opening a kernel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub strategy: Strategy,
    pub created_at: DateTime<Utc>,
    pub query: Option<String>,
    pub datasets: usize,
    pub nodes: usize,
    pub branches: usize,
}

impl SessionSummary {
    pub fn of(state: &SessionState) -> Self {
        let graph = state.graph.as_ref();
        Self {
            id: state.id.clone(),
            strategy: state.strategy,
            created_at: state.created_at,
            query: graph.and_then(|g| match g.root().effective() {
                NodeContent::Query(spec) => Some(spec.query.clone()),
                _ => None,
            }),
            datasets: state.datasets.len(),
            nodes: graph.map_or(0, |g| g.nodes().len()),
            branches: graph.map_or(0, |g| g.branches().len()),
        }
    }
}

/// Locks a session, recovering from a poisoned mutex. The runtime only
/// changes state through whole events, so a panic mid-call cannot leave it
/// half-applied.
pub fn lock(session: &SharedSession) -> MutexGuard<'_, SessionRuntime> {
    session.lock().unwrap_or_else(|e| e.into_inner())
}

/// Ids become directory names, so only a conservative alphabet is allowed.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct SessionManager {
    config: ServiceConfig,
    provider: Arc<dyn Provider>,
    sink: Option<SinkFactory>,
    open: Mutex<HashMap<String, SharedSession>>,
}

impl std::fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionManager").field("config", &self.config).finish()
    }
}

impl SessionManager {
    pub fn new(config: ServiceConfig, provider: Arc<dyn Provider>) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.data_dir).map_err(SessionError::from)?;
        Ok(Self {
            config,
            provider,
            sink: None,
            open: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_sink(mut self, sink: SinkFactory) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn dir_of(&self, id: &str) -> PathBuf {
        self.config.data_dir.join(id)
    }

    fn prepare(&self, mut rt: SessionRuntime) -> SharedSession {
        rt.set_max_subgoals(self.config.max_subgoals);
        if let Some(make) = &self.sink {
            rt.set_sink(Some(make(rt.id())));
        }
        Arc::new(Mutex::new(rt))
    }

    fn register(&self, rt: SessionRuntime) -> SharedSession {
        let id = rt.id().to_string();
        let shared = self.prepare(rt);
        self.open.lock().unwrap_or_else(|e| e.into_inner()).insert(id, shared.clone());
        shared
    }

    /// Provider config for a new session; `mode` overrides the default mode.
    fn provider_config(&self, mode: Option<ProviderMode>) -> Result<ProviderConfig, ServiceError> {
        let base = &self.config.provider;
        match mode {
            None => Ok(base.clone()),
            Some(m) if m == base.mode => Ok(base.clone()),
            Some(ProviderMode::Scripted) => Err(ServiceError::NoFixtures),
            Some(ProviderMode::Live) => Ok(ProviderConfig {
                mode: ProviderMode::Live,
                fixture_dir: None,
                ..base.clone()
            }),
        }
    }

    /// The injected provider serves the default config; sessions recorded
    /// under another config get their own.
    fn provider_for(&self, config: &ProviderConfig) -> Arc<dyn Provider> {
        if *config == self.config.provider {
            self.provider.clone()
        } else {
            from_config(config)
        }
    }

    pub fn create(&self, strategy: Strategy, mode: Option<ProviderMode>) -> Result<SharedSession, ServiceError> {
        let provider_config = self.provider_config(mode)?;
        let id = format!("s-{}", &uuid::Uuid::new_v4().simple().to_string()[..12]);
        let dir = SessionDir::create(self.dir_of(&id))?;
        let provider = self.provider_for(&provider_config);
        let rt = SessionRuntime::create(dir, id, strategy, provider_config, self.config.kernel.clone(), provider)?;
        Ok(self.register(rt))
    }

    /// Returns an open session, loading it from disk if needed.
    pub fn get(&self, id: &str) -> Result<SharedSession, ServiceError> {
        let mut open = self.open.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = open.get(id) {
            return Ok(s.clone());
        }
        if !valid_id(id) || !self.dir_of(id).join(EVENTS_FILE).is_file() {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let dir = SessionDir::open(self.dir_of(id))?;
        let (state, _) = dir.load()?;
        let rt = SessionRuntime::open(dir, self.provider_for(&state.provider), self.config.kernel.clone())?;
        let shared = self.prepare(rt);
        open.insert(id.to_string(), shared.clone());
        Ok(shared)
    }

    /// All sessions on disk, newest first. Sessions that fail to load are
    /// skipped with a warning.
    pub fn list(&self) -> Result<Vec<SessionSummary>, ServiceError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.config.data_dir).map_err(SessionError::from)? {
            let entry = entry.map_err(SessionError::from)?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if !valid_id(&id) || !entry.path().join(EVENTS_FILE).is_file() {
                continue;
            }
            match self.summary(&id, &entry.path()) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!(session = %id, "skipping unreadable session: {e}"),
            }
        }
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    fn summary(&self, id: &str, path: &Path) -> Result<SessionSummary, ServiceError> {
        if let Some(s) = self.open.lock().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(SessionSummary::of(lock(s).state()));
        }
        let (state, _) = SessionDir::open(path)?.load()?;
        Ok(SessionSummary::of(&state))
    }

    /// Materializes an export under its own id.
    pub fn import(&self, export: SessionExport) -> Result<SharedSession, ServiceError> {
        let id = export.state.id.clone();
        if !valid_id(&id) {
            return Err(SessionError::SchemaViolation(format!("invalid session id {id:?}")).into());
        }
        if self.dir_of(&id).exists() {
            return Err(ServiceError::SessionExists(id));
        }
        let dir = SessionDir::create(self.dir_of(&id))?;
        let provider = self.provider_for(&export.state.provider);
        let rt = match SessionRuntime::import(dir, export, provider, self.config.kernel.clone()) {
            Ok(rt) => rt,
            Err(e) => {
                let _ = std::fs::remove_dir_all(self.dir_of(&id));
                return Err(e.into());
            }
        };
        Ok(self.register(rt))
    }
}
