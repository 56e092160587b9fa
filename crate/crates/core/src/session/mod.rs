//! Event-sourced session state.
//!
//! A session changes only by applying [`EventBody`] values. Events carry the
//! outcomes of language-model calls and executions, so replaying a log
//! rebuilds the state without a provider or kernel.

mod store;

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{ExecutionResult, KernelConfig};
use crate::graph::{BranchId, GraphError, NodeContent, NodeId, NodeKind, SessionGraph, SubmitOutcome};
use crate::llm::ProviderConfig;
use crate::profile::Dataset;
use crate::side::{SideThread, ThreadId};
use crate::task::{Strategy, TaskSpec};

pub use store::{SessionDir, EVENTS_FILE};

pub const SCHEMA_VERSION: u32 = 1;

/// Keys left out of the state hash.
const VOLATILE_KEYS: &[&str] = &["created_at", "duration_ms"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no task has been started")]
    NoTask,
    #[error("a task has already been started")]
    TaskAlreadyStarted,
    #[error("task strategy {got} does not match session strategy {expected}")]
    StrategyMismatch { expected: Strategy, got: Strategy },
    #[error("replay diverged: {0}")]
    Divergence(String),
    #[error("unknown thread {0}")]
    UnknownThread(ThreadId),
    #[error("snapshot violates the schema: {0}")]
    SchemaViolation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Created {
        id: String,
        strategy: Strategy,
        provider: ProviderConfig,
        kernel: KernelConfig,
    },
    DatasetAdded {
        dataset: Dataset,
    },
    TaskStarted {
        spec: TaskSpec,
    },
    NodeAppended {
        node: NodeId,
        branch: BranchId,
        parent: NodeId,
        kind: NodeKind,
        content: NodeContent,
    },
    ExecutionRecorded {
        node: NodeId,
        result: Option<ExecutionResult>,
    },
    NodeEdited {
        node: NodeId,
        content: NodeContent,
    },
    EditUndone {
        node: NodeId,
    },
    EditSubmitted {
        node: NodeId,
        outcome: SubmitOutcome,
    },
    BranchSwitched {
        branch: BranchId,
    },
    ThreadOpened {
        thread: SideThread,
    },
    ThreadUpdated {
        thread: SideThread,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Created { .. } => "created",
            EventBody::DatasetAdded { .. } => "dataset_added",
            EventBody::TaskStarted { .. } => "task_started",
            EventBody::NodeAppended { .. } => "node_appended",
            EventBody::ExecutionRecorded { .. } => "execution_recorded",
            EventBody::NodeEdited { .. } => "node_edited",
            EventBody::EditUndone { .. } => "edit_undone",
            EventBody::EditSubmitted { .. } => "edit_submitted",
            EventBody::BranchSwitched { .. } => "branch_switched",
            EventBody::ThreadOpened { .. } => "thread_opened",
            EventBody::ThreadUpdated { .. } => "thread_updated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub strategy: Strategy,
    pub provider: ProviderConfig,
    pub kernel: KernelConfig,
    pub datasets: Vec<Dataset>,
    pub graph: Option<SessionGraph>,
    pub threads: Vec<SideThread>,
}

impl SessionState {
    /// Rebuilds a state from its full event log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, SessionError> {
        let mut iter = events.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| SessionError::Divergence("empty event log".into()))?;
        let mut state = Self::from_created(first)?;
        let mut last = first.seq;
        for ev in iter {
            if ev.seq <= last {
                return Err(SessionError::Divergence(format!("sequence {} follows {last}", ev.seq)));
            }
            last = ev.seq;
            state.apply(&ev.body)?;
        }
        Ok(state)
    }

    pub fn from_created(ev: &Event) -> Result<Self, SessionError> {
        match &ev.body {
            EventBody::Created {
                id,
                strategy,
                provider,
                kernel,
            } => Ok(Self {
                id: id.clone(),
                created_at: ev.at,
                strategy: *strategy,
                provider: provider.clone(),
                kernel: kernel.clone(),
                datasets: Vec::new(),
                graph: None,
                threads: Vec::new(),
            }),
            other => Err(SessionError::Divergence(format!("log starts with {}", other.kind()))),
        }
    }

    pub fn graph(&self) -> Result<&SessionGraph, SessionError> {
        self.graph.as_ref().ok_or(SessionError::NoTask)
    }

    fn graph_mut(&mut self) -> Result<&mut SessionGraph, SessionError> {
        self.graph.as_mut().ok_or(SessionError::NoTask)
    }

    pub fn thread(&self, id: ThreadId) -> Result<&SideThread, SessionError> {
        self.threads
            .iter()
            .find(|t| t.id == id)
            .ok_or(SessionError::UnknownThread(id))
    }

    pub fn dataset(&self, id: &crate::profile::DatasetId) -> Option<&Dataset> {
        self.datasets.iter().find(|d| &d.id == id)
    }

    /// Applies one event. On error the state is unchanged.
    pub fn apply(&mut self, body: &EventBody) -> Result<(), SessionError> {
        match body {
            EventBody::Created { .. } => {
                return Err(SessionError::Divergence("created event in the middle of a log".into()))
            }
            EventBody::DatasetAdded { dataset } => {
                if self.dataset(&dataset.id).is_none() {
                    self.datasets.push(dataset.clone());
                }
            }
            EventBody::TaskStarted { spec } => {
                if self.graph.is_some() {
                    return Err(SessionError::TaskAlreadyStarted);
                }
                if spec.strategy != self.strategy {
                    return Err(SessionError::StrategyMismatch {
                        expected: self.strategy,
                        got: spec.strategy,
                    });
                }
                self.graph = Some(SessionGraph::new(spec.clone()));
            }
            EventBody::NodeAppended {
                node,
                branch,
                parent,
                kind,
                content,
            } => {
                let g = self.graph_mut()?;
                let expected = NodeId(g.nodes().len() as u64 + 1);
                if *node != expected {
                    return Err(SessionError::Divergence(format!("append produced {expected}, log says {node}")));
                }
                g.append(*branch, *parent, *kind, content.clone())?;
            }
            EventBody::ExecutionRecorded { node, result } => {
                self.graph_mut()?.set_execution(*node, result.clone())?;
            }
            EventBody::NodeEdited { node, content } => {
                self.graph_mut()?.edit(*node, content.clone())?;
            }
            EventBody::EditUndone { node } => {
                self.graph_mut()?.undo(*node)?;
            }
            EventBody::EditSubmitted { node, outcome } => {
                let mut g = self.graph()?.clone();
                let got = g.submit(*node)?;
                if &got != outcome {
                    return Err(SessionError::Divergence(format!("submit of {node} produced {got:?}")));
                }
                self.graph = Some(g);
                self.refresh_stale();
            }
            EventBody::BranchSwitched { branch } => {
                self.graph_mut()?.switch_branch(*branch)?;
                self.refresh_stale();
            }
            EventBody::ThreadOpened { thread } => {
                if self.threads.iter().any(|t| t.id == thread.id) {
                    return Err(SessionError::Divergence(format!("thread {} opened twice", thread.id)));
                }
                self.threads.push(thread.clone());
            }
            EventBody::ThreadUpdated { thread } => {
                let slot = self
                    .threads
                    .iter_mut()
                    .find(|t| t.id == thread.id)
                    .ok_or(SessionError::UnknownThread(thread.id))?;
                *slot = thread.clone();
            }
        }
        Ok(())
    }

    /// Marks threads whose anchor left the active path as stale, and clears
    /// the flag on those that are back.
    fn refresh_stale(&mut self) {
        let Some(g) = &self.graph else { return };
        let path: Vec<NodeId> = g.active_path().iter().map(|n| n.id).collect();
        for t in &mut self.threads {
            t.stale = !path.contains(&t.anchor.node);
        }
    }

    /// Hash of the canonical JSON form, without timestamps, durations and
    /// side threads.
    pub fn state_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("state serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("threads");
        }
        strip_keys(&mut v, VOLATILE_KEYS);
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn strip_keys(v: &mut serde_json::Value, keys: &[&str]) {
    match v {
        serde_json::Value::Object(map) => {
            for k in keys {
                map.remove(*k);
            }
            for child in map.values_mut() {
                strip_keys(child, keys);
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                strip_keys(child, keys);
            }
        }
        _ => {}
    }
}

/// Portable form of a session: its state and the log that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub schema_version: u32,
    pub state: SessionState,
    pub events: Vec<Event>,
    /// Raw dataset files, base64, keyed by their session-relative path.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl SessionExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export serializes")
    }

    /// Parses and validates an export: schema version, graph invariants and
    /// agreement between the state and its log.
    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SessionError::SchemaViolation(e.to_string()))?;
        match v.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(n) if n == u64::from(SCHEMA_VERSION) => {}
            Some(n) => return Err(SessionError::SchemaViolation(format!("unsupported schema_version {n}"))),
            None => return Err(SessionError::SchemaViolation("missing schema_version".into())),
        }
        let export: SessionExport =
            serde_json::from_value(v).map_err(|e| SessionError::SchemaViolation(e.to_string()))?;
        if let Some(g) = &export.state.graph {
            g.check_invariants().map_err(SessionError::SchemaViolation)?;
        }
        let replayed = SessionState::replay(&export.events)
            .map_err(|e| SessionError::SchemaViolation(format!("event log does not replay: {e}")))?;
        if replayed.state_hash() != export.state.state_hash() || replayed.threads != export.state.threads {
            return Err(SessionError::SchemaViolation("state does not match its event log".into()));
        }
        for ds in &export.state.datasets {
            let safe_id = !ds.id.0.is_empty() && ds.id.0.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
            if !safe_id || ds.source_ref != format!("datasets/{}.csv", ds.id) {
                return Err(SessionError::SchemaViolation(format!("dataset {} has an invalid source path", ds.id)));
            }
        }
        for (path, data) in &export.files {
            if !export.state.datasets.iter().any(|d| &d.source_ref == path) {
                return Err(SessionError::SchemaViolation(format!("file {path:?} belongs to no dataset")));
            }
            BASE64
                .decode(data)
                .map_err(|e| SessionError::SchemaViolation(format!("file {path:?}: {e}")))?;
        }
        Ok(export)
    }
}
