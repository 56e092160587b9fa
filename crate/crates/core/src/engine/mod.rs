//! Strategy driver: turns task state into prompts, prompts into components,
//! and components into executions.
//!
//! [`SessionRuntime`] owns one session. Every state change goes through
//! [`SessionRuntime::record`], which applies an event and appends it to the
//! log, so the live state always equals a replay of the log.

mod context;
mod mutate;
mod side_ops;

use std::collections::BTreeMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::service::{preamble, ReplayEntry, ServiceError};
use crate::exec::{ExecutionService, KernelConfig, KernelError};
use crate::graph::{BranchId, EditState, GraphError, NodeContent, NodeId, NodeKind, SessionGraph, SubmitOutcome, Turn};
use crate::llm::block::UNKNOWN_COLUMN_REASON;
use crate::llm::{
    parse_block, repair_loop, templates, BlockKind, LlmError, Message, ParseOptions, ParsedBlock, Provider,
    ProviderConfig, ProviderError, RepairOutcome, Vars,
};
use crate::profile::{self, Dataset, DatasetId, ProfileError};
use crate::session::{Event, EventBody, SessionDir, SessionError, SessionExport, SessionState, SCHEMA_VERSION};
use crate::side::SideError;

pub use crate::task::{Strategy, TaskSpec, TaskSpecError};
pub use mutate::{apply_phase_a, toggle_step, PhaseAAction};

pub const DEFAULT_MAX_SUBGOALS: u32 = 10;
const PROMPT_LOG_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Exec(#[from] ServiceError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Side(#[from] SideError),
    #[error(transparent)]
    Spec(#[from] TaskSpecError),
    #[error("node {0} has a pending edit; submit or undo it first")]
    PendingEditsExist(NodeId),
    #[error("more than {0} subgoals")]
    MaxSubgoalsExceeded(u32),
    #[error("the task is complete")]
    TaskComplete,
    #[error("not available in the {0} strategy")]
    WrongStrategy(Strategy),
    #[error("the model kept referring to unknown columns: {0}")]
    RejectedColumns(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("no assumption at index {0}")]
    UnknownAssumption(usize),
    #[error("plan step {0} is not optional")]
    NotOptional(u32),
    #[error("no plan step {0}")]
    UnknownStep(u32),
    #[error("node {0} is not a {1} node")]
    WrongNodeKind(NodeId, NodeKind),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(DatasetId),
    #[error("empty prompt")]
    EmptyPrompt,
}

impl From<KernelError> for EngineError {
    fn from(e: KernelError) -> Self {
        EngineError::Exec(ServiceError::Kernel(e))
    }
}

/// Coarse error categories; the HTTP layer maps these to status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Invalid,
    Upstream,
    BadRequest,
    Unavailable,
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Llm(LlmError::Template(_)) => "TemplateError",
            EngineError::Llm(LlmError::Provider(ProviderError::ProviderUnavailable { .. })) => "ProviderUnavailable",
            EngineError::Llm(LlmError::Provider(ProviderError::FixtureMissing { .. })) => "FixtureMissing",
            EngineError::Llm(LlmError::UnparseableAfterRetries { .. }) => "UnparseableAfterRetries",
            EngineError::Graph(g) => graph_code(g),
            EngineError::Session(s) => match s {
                // graph errors raised while applying an event keep their own code
                SessionError::Graph(g) => graph_code(g),
                SessionError::NoTask => "NoTask",
                SessionError::TaskAlreadyStarted => "TaskAlreadyStarted",
                SessionError::StrategyMismatch { .. } => "StrategyMismatch",
                SessionError::Divergence(_) => "ReplayDivergence",
                SessionError::UnknownThread(_) => "UnknownThread",
                SessionError::SchemaViolation(_) => "SchemaViolation",
                SessionError::Io(_) => "IoError",
            },
            EngineError::Exec(e) => match e {
                ServiceError::Kernel(k) => match k {
                    KernelError::KernelStartFailure(_) => "KernelStartFailure",
                    KernelError::ExecutionTimeout(_) => "ExecutionTimeout",
                    KernelError::KernelBusy => "KernelBusy",
                    KernelError::KernelDead(_) => "KernelDead",
                    KernelError::Protocol(_) => "KernelProtocolError",
                    KernelError::UnknownVariable(_) => "UnknownVariable",
                    KernelError::NotTabular(_) => "NotTabular",
                },
                ServiceError::Graph(g) => graph_code(g),
                ServiceError::NotCode(_) => "NotCode",
                ServiceError::Preamble(_) => "DatasetLoadFailed",
            },
            EngineError::Profile(p) => match p {
                ProfileError::EmptyFile => "EmptyFile",
                ProfileError::DuplicateColumn(_) => "DuplicateColumn",
                ProfileError::UnknownDataset(_) => "UnknownDataset",
                ProfileError::NoDatasetsSelected => "NoDatasetsSelected",
                _ => "ProfileError",
            },
            EngineError::Side(s) => match s {
                SideError::InvalidSelection { .. } => "InvalidSelection",
                SideError::SelectionRequired => "SelectionRequired",
                SideError::NotCodeAnchor(_) => "NotCodeAnchor",
                SideError::ThreadNotAnswered(_) => "ThreadNotAnswered",
                SideError::NotInsertable(_) => "NotInsertable",
                SideError::AnchorNodeGone(_) => "AnchorNodeGone",
                SideError::UnknownThread(_) => "UnknownThread",
                SideError::Unavailable => "SideConversationsUnavailable",
            },
            EngineError::Spec(TaskSpecError::EmptyQuery) => "EmptyQuery",
            EngineError::Spec(TaskSpecError::NoDatasets) => "NoDatasetsSelected",
            EngineError::PendingEditsExist(_) => "PendingEditsExist",
            EngineError::MaxSubgoalsExceeded(_) => "MaxSubgoalsExceeded",
            EngineError::TaskComplete => "TaskComplete",
            EngineError::WrongStrategy(_) => "WrongStrategy",
            EngineError::RejectedColumns(_) => "RejectedColumns",
            EngineError::UnknownColumn(_) => "UnknownColumn",
            EngineError::UnknownAssumption(_) => "UnknownAssumption",
            EngineError::NotOptional(_) => "NotOptional",
            EngineError::UnknownStep(_) => "UnknownStep",
            EngineError::WrongNodeKind(..) => "WrongNodeKind",
            EngineError::InvalidEdit(_) => "InvalidEdit",
            EngineError::UnknownDataset(_) => "UnknownDataset",
            EngineError::EmptyPrompt => "EmptyPrompt",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self.code() {
            "UnknownNode" | "UnknownBranch" | "UnknownThread" | "UnknownDataset" | "UnknownVariable" => NotFound,
            "ProviderUnavailable" | "FixtureMissing" | "UnparseableAfterRetries" | "RejectedColumns" => Upstream,
            "SchemaViolation" => BadRequest,
            "KernelStartFailure" | "KernelDead" | "KernelProtocolError" | "IoError" | "ReplayDivergence"
            | "TemplateError" | "DatasetLoadFailed" => Unavailable,
            "EmptyFile" | "DuplicateColumn" | "ProfileError" | "NoDatasetsSelected" | "EmptyQuery"
            | "InvalidSelection" | "SelectionRequired" | "NotCodeAnchor" | "UnknownColumn" | "UnknownAssumption"
            | "NotOptional" | "UnknownStep" | "InvalidEdit" | "ContentMismatch" | "NotTabular" | "NotCode"
            | "WrongNodeKind" | "EmptyPrompt" | "StrategyMismatch" => Invalid,
            _ => Conflict,
        }
    }

    /// Hash of the request that failed, for provider failures.
    pub fn request_hash(&self) -> Option<&str> {
        match self {
            EngineError::Llm(LlmError::Provider(p)) => Some(p.request_hash()),
            _ => None,
        }
    }

    pub fn info(&self) -> ErrorInfo {
        ErrorInfo {
            code: self.code().to_string(),
            message: self.to_string(),
            request_hash: self.request_hash().map(str::to_string),
        }
    }
}

fn graph_code(g: &GraphError) -> &'static str {
    match g {
        GraphError::UnknownNode(_) => "UnknownNode",
        GraphError::UnknownBranch(_) => "UnknownBranch",
        GraphError::StaleBranch(_) => "StaleBranch",
        GraphError::NotEditable(_) => "NotEditable",
        GraphError::NothingPending(_) => "NothingPending",
        GraphError::NotOnActivePath(_) => "NotOnActivePath",
        GraphError::ContentMismatch(_) => "ContentMismatch",
    }
}

/// Serializable error description for clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
    pub request_hash: Option<String>,
}

/// One language-model generation, kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub template: String,
    pub messages: Vec<Message>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitReport {
    pub outcome: SubmitOutcome,
    /// Nodes generated to replace the invalidated ones, in order.
    pub regenerated: Vec<NodeId>,
    /// Set when regeneration stopped early; the nodes generated before the
    /// failure are kept.
    pub regeneration_error: Option<ErrorInfo>,
}

/// Derived progress of the current strategy along the active path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum StrategyState {
    Phasewise { phase: Phase },
    Stepwise { subgoal_index: u32, completed: bool, max_subgoals: u32 },
    Conversational { turn_count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "A_assumptions")]
    Assumptions,
    #[serde(rename = "B_plan")]
    Plan,
    #[serde(rename = "C_code")]
    Code,
    #[serde(rename = "done")]
    Done,
}

pub type EventSink = Arc<dyn Fn(&Event) + Send + Sync>;

pub struct SessionRuntime {
    state: SessionState,
    log: Vec<Event>,
    dir: SessionDir,
    provider: Arc<dyn Provider>,
    exec: ExecutionService,
    sink: Option<EventSink>,
    max_subgoals: u32,
    prompts: Vec<PromptRecord>,
    snapshot_seq: u64,
}

impl std::fmt::Debug for SessionRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionRuntime")
            .field("id", &self.state.id)
            .field("strategy", &self.state.strategy)
            .field("events", &self.log.len())
            .finish()
    }
}

impl SessionRuntime {
    /// Creates a new session persisted in `dir`.
    pub fn create(
        dir: SessionDir,
        id: impl Into<String>,
        strategy: Strategy,
        provider_config: ProviderConfig,
        kernel: KernelConfig,
        provider: Arc<dyn Provider>,
    ) -> Result<Self, EngineError> {
        let id = id.into();
        let created = Event {
            seq: 1,
            body: EventBody::Created {
                id,
                strategy,
                provider: provider_config,
                kernel: kernel.clone(),
            },
            at: Utc::now(),
        };
        let state = SessionState::from_created(&created)?;
        dir.append_event(&created)?;
        let mut rt = Self::assemble(state, vec![created], dir, provider, kernel);
        rt.checkpoint();
        Ok(rt)
    }

    /// Loads a persisted session by replaying its log.
    pub fn open(dir: SessionDir, provider: Arc<dyn Provider>, kernel: KernelConfig) -> Result<Self, EngineError> {
        let (state, log) = dir.load()?;
        let mut rt = Self::assemble(state, log, dir, provider, kernel);
        rt.snapshot_seq = 0;
        rt.checkpoint();
        Ok(rt)
    }

    /// Materializes an export into `dir`, replacing any session there.
    pub fn import(
        dir: SessionDir,
        export: SessionExport,
        provider: Arc<dyn Provider>,
        kernel: KernelConfig,
    ) -> Result<Self, EngineError> {
        dir.clear_log()?;
        for (path, data) in &export.files {
            let bytes = BASE64
                .decode(data)
                .map_err(|e| SessionError::SchemaViolation(e.to_string()))?;
            std::fs::write(dir.root().join(path), bytes).map_err(SessionError::from)?;
        }
        for ev in &export.events {
            dir.append_event(ev)?;
        }
        let mut rt = Self::assemble(export.state, export.events, dir, provider, kernel);
        rt.checkpoint();
        Ok(rt)
    }

    fn assemble(
        state: SessionState,
        log: Vec<Event>,
        dir: SessionDir,
        provider: Arc<dyn Provider>,
        kernel: KernelConfig,
    ) -> Self {
        let exec = ExecutionService::new(kernel, dir.root(), String::new());
        Self {
            state,
            log,
            dir,
            provider,
            exec,
            sink: None,
            max_subgoals: DEFAULT_MAX_SUBGOALS,
            prompts: Vec::new(),
            snapshot_seq: 0,
        }
    }

    pub fn set_sink(&mut self, sink: Option<EventSink>) {
        self.sink = sink;
    }

    pub fn set_max_subgoals(&mut self, max: u32) {
        self.max_subgoals = max;
    }

    pub fn id(&self) -> &str {
        &self.state.id
    }

    pub fn strategy(&self) -> Strategy {
        self.state.strategy
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn graph(&self) -> Result<&SessionGraph, EngineError> {
        Ok(self.state.graph()?)
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn last_seq(&self) -> u64 {
        self.log.last().map_or(0, |e| e.seq)
    }

    pub fn events_since(&self, seq: u64) -> &[Event] {
        let start = self.log.partition_point(|e| e.seq <= seq);
        &self.log[start..]
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }

    pub fn state_hash(&self) -> String {
        self.state.state_hash()
    }

    pub fn dir(&self) -> &SessionDir {
        &self.dir
    }

    pub fn export(&self) -> Result<SessionExport, EngineError> {
        let mut files = BTreeMap::new();
        for ds in &self.state.datasets {
            let bytes = std::fs::read(self.dir.root().join(&ds.source_ref)).map_err(SessionError::from)?;
            files.insert(ds.source_ref.clone(), BASE64.encode(bytes));
        }
        Ok(SessionExport {
            schema_version: SCHEMA_VERSION,
            state: self.state.clone(),
            events: self.log.clone(),
            files,
        })
    }

    /// Applies an event, appends it to the log and notifies the sink.
    fn record(&mut self, body: EventBody) -> Result<(), EngineError> {
        self.state.apply(&body)?;
        let ev = Event {
            seq: self.last_seq() + 1,
            body,
            at: Utc::now(),
        };
        self.dir.append_event(&ev)?;
        if let Some(sink) = &self.sink {
            sink(&ev);
        }
        self.log.push(ev);
        Ok(())
    }

    fn checkpoint(&mut self) {
        let seq = self.last_seq();
        if seq == self.snapshot_seq {
            return;
        }
        match self.dir.write_snapshot(&self.state, seq) {
            Ok(()) => self.snapshot_seq = seq,
            Err(e) => tracing::warn!(session = %self.state.id, "snapshot failed: {e}"),
        }
    }

    fn op<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, EngineError>) -> Result<T, EngineError> {
        let out = f(self);
        self.checkpoint();
        out
    }

    // ----- datasets and task start -----

    /// Profiles a CSV file and adds it to the session. Adding identical
    /// bytes twice returns the existing dataset.
    pub fn add_dataset(&mut self, name: &str, bytes: &[u8]) -> Result<Dataset, EngineError> {
        self.op(|rt| {
            let ds = profile::ingest_csv(bytes, name)?;
            if let Some(existing) = rt.state.dataset(&ds.id) {
                return Ok(existing.clone());
            }
            std::fs::write(rt.dir.root().join(&ds.source_ref), bytes).map_err(SessionError::from)?;
            rt.record(EventBody::DatasetAdded { dataset: ds.clone() })?;
            Ok(ds)
        })
    }

    /// Starts the task and generates the first component(s).
    pub fn start_task(&mut self, query: &str, dataset_ids: Vec<DatasetId>) -> Result<Vec<NodeId>, EngineError> {
        self.op(|rt| {
            let spec = TaskSpec::new(query, dataset_ids, rt.state.strategy)?;
            for id in &spec.dataset_ids {
                if rt.state.dataset(id).is_none() {
                    return Err(EngineError::UnknownDataset(id.clone()));
                }
            }
            if rt.state.graph.is_some() {
                return Err(SessionError::TaskAlreadyStarted.into());
            }
            rt.record(EventBody::TaskStarted { spec })?;
            let mut out = Vec::new();
            let first = rt.generate_next()?.expect("a fresh task always has a next component");
            out.push(first);
            if rt.state.strategy == Strategy::Stepwise {
                out.extend(rt.generate_next()?);
            }
            Ok(out)
        })
    }

    // ----- progress -----

    fn check_no_pending(&self) -> Result<(), EngineError> {
        match self.graph()?.highest_pending() {
            Some(n) => Err(EngineError::PendingEditsExist(n)),
            None => Ok(()),
        }
    }

    /// Generates the next component of the active branch. Conversational
    /// sessions advance only through follow-ups, so this returns `None`.
    pub fn advance(&mut self) -> Result<Option<NodeId>, EngineError> {
        self.op(|rt| {
            rt.graph()?;
            rt.check_no_pending()?;
            if rt.state.strategy == Strategy::Conversational {
                return Ok(None);
            }
            rt.generate_next()
        })
    }

    /// Appends a user turn and the AI turn answering it.
    pub fn followup(&mut self, prompt: &str) -> Result<(NodeId, NodeId), EngineError> {
        self.op(|rt| {
            if rt.state.strategy != Strategy::Conversational {
                return Err(EngineError::WrongStrategy(rt.state.strategy));
            }
            let prompt = prompt.trim();
            if prompt.is_empty() {
                return Err(EngineError::EmptyPrompt);
            }
            rt.graph()?;
            rt.check_no_pending()?;
            let user = rt.append(
                NodeKind::ConversationTurn,
                NodeContent::Turn(Turn::User {
                    prompt: prompt.to_string(),
                }),
            )?;
            let ai = rt.conversational_turn()?;
            Ok((user, ai))
        })
    }

    pub fn strategy_state(&self) -> Result<StrategyState, EngineError> {
        let path = self.graph()?.active_path();
        let leaf = path.last().expect("paths are never empty");
        Ok(match self.state.strategy {
            Strategy::Phasewise => StrategyState::Phasewise {
                phase: match leaf.kind {
                    NodeKind::InputQuery => Phase::Assumptions,
                    NodeKind::ColumnAssumptionsPhase => Phase::Plan,
                    NodeKind::PlanPhase => Phase::Code,
                    _ => Phase::Done,
                },
            },
            Strategy::Stepwise => {
                let subgoals = path.iter().filter(|n| n.kind == NodeKind::SubgoalAssumptions).count() as u32;
                StrategyState::Stepwise {
                    subgoal_index: subgoals.max(1),
                    completed: is_completion(leaf.effective()),
                    max_subgoals: self.max_subgoals,
                }
            }
            Strategy::Conversational => StrategyState::Conversational {
                turn_count: path.iter().filter(|n| n.kind == NodeKind::ConversationTurn).count() as u32,
            },
        })
    }

    // ----- generation -----

    fn generate(&mut self, template: &str, vars: Vars, opts: &ParseOptions) -> Result<RepairOutcome, EngineError> {
        let t = templates::get(template).map_err(LlmError::from)?;
        let out = repair_loop(self.provider.as_ref(), t, &vars, self.state.provider.max_retries, opts)?;
        if self.prompts.len() >= PROMPT_LOG_CAP {
            self.prompts.drain(..PROMPT_LOG_CAP / 2);
        }
        self.prompts.push(PromptRecord {
            template: template.to_string(),
            messages: out.prompt.clone(),
            attempts: out.attempts,
        });
        Ok(out)
    }

    fn append(&mut self, kind: NodeKind, content: NodeContent) -> Result<NodeId, EngineError> {
        let g = self.graph()?;
        let node = NodeId(g.nodes().len() as u64 + 1);
        let (branch, parent) = (g.active_branch(), g.active_leaf());
        self.record(EventBody::NodeAppended {
            node,
            branch,
            parent,
            kind,
            content,
        })?;
        Ok(node)
    }

    fn active_spec(&self) -> Result<TaskSpec, EngineError> {
        let path = self.graph()?.active_path();
        Ok(context::root_spec(&path).clone())
    }

    fn data_summary(&self, spec: &TaskSpec) -> Result<String, EngineError> {
        Ok(profile::summarize_for_llm(&self.state.datasets, &spec.dataset_ids)?)
    }

    fn selected_datasets(&self, spec: &TaskSpec) -> Vec<&Dataset> {
        spec.dataset_ids.iter().filter_map(|id| self.state.dataset(id)).collect()
    }

    fn known_columns(&self, spec: &TaskSpec) -> Vec<String> {
        self.selected_datasets(spec)
            .into_iter()
            .flat_map(|d| d.column_names().map(str::to_string))
            .collect()
    }

    fn sync_preamble(&mut self) -> Result<(), EngineError> {
        let spec = self.active_spec()?;
        let code = preamble(self.selected_datasets(&spec));
        self.exec.set_preamble(code);
        Ok(())
    }

    fn record_replay(&mut self, entries: Vec<ReplayEntry>) -> Result<(), EngineError> {
        for e in entries {
            self.record(EventBody::ExecutionRecorded {
                node: e.node,
                result: e.result,
            })?;
        }
        Ok(())
    }

    /// Executes a code node on the active branch's kernel.
    fn execute(&mut self, node: NodeId) -> Result<(), EngineError> {
        self.sync_preamble()?;
        let run = self.exec.execute_node(self.state.graph()?, node)?;
        self.record_replay(run.replayed)?;
        self.record(EventBody::ExecutionRecorded {
            node,
            result: Some(run.result),
        })
    }

    /// Generates whatever follows the active leaf.
    fn generate_next(&mut self) -> Result<Option<NodeId>, EngineError> {
        let g = self.graph()?;
        let leaf = g.node(g.active_leaf())?;
        let kind = leaf.kind;
        let content = leaf.effective().clone();
        match (self.state.strategy, kind) {
            (Strategy::Phasewise, NodeKind::InputQuery) => self.phase_a().map(Some),
            (Strategy::Phasewise, NodeKind::ColumnAssumptionsPhase) => self.phase_b().map(Some),
            (Strategy::Phasewise, NodeKind::PlanPhase) => self.phase_c().map(Some),
            (Strategy::Phasewise, _) => Err(EngineError::TaskComplete),
            (Strategy::Stepwise, NodeKind::InputQuery) => self.loading_step().map(Some),
            (Strategy::Stepwise, NodeKind::SubgoalCode) => self.next_subgoal().map(Some),
            (Strategy::Stepwise, NodeKind::SubgoalAssumptions) if is_completion(&content) => Err(EngineError::TaskComplete),
            (Strategy::Stepwise, NodeKind::SubgoalAssumptions) => self.subgoal_code().map(Some),
            (Strategy::Conversational, NodeKind::InputQuery) => self.conversational_turn().map(Some),
            (Strategy::Conversational, NodeKind::ConversationTurn) => match content {
                NodeContent::Turn(Turn::User { .. }) => self.conversational_turn().map(Some),
                _ => Ok(None),
            },
            (strategy, kind) => Err(EngineError::Session(SessionError::Divergence(format!(
                "{kind} node in a {strategy} session"
            )))),
        }
    }

    fn phase_a(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let vars = crate::llm::vars([("query", spec.query.clone()), ("data_summary", self.data_summary(&spec)?)]);
        let opts = ParseOptions {
            known_columns: Some(self.known_columns(&spec)),
        };
        let out = match self.generate(templates::PHASEWISE_COLUMNS, vars, &opts) {
            Err(EngineError::Llm(LlmError::UnparseableAfterRetries { last_error, .. }))
                if last_error.reason.starts_with(UNKNOWN_COLUMN_REASON) =>
            {
                return Err(EngineError::RejectedColumns(last_error.reason));
            }
            other => other?,
        };
        self.append(NodeKind::ColumnAssumptionsPhase, NodeContent::Block(out.block))
    }

    fn phase_b(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let path = self.graph()?.active_path();
        let a = context::find_block(&path, NodeKind::ColumnAssumptionsPhase).expect("phase A precedes phase B");
        let vars = crate::llm::vars([
            ("query", spec.query.clone()),
            ("data_summary", self.data_summary(&spec)?),
            ("column_assumptions", a.serialize()),
        ]);
        let out = self.generate(templates::PHASEWISE_PLAN, vars, &ParseOptions::default())?;
        self.append(NodeKind::PlanPhase, NodeContent::Block(out.block))
    }

    fn phase_c(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let path = self.graph()?.active_path();
        let a = context::find_block(&path, NodeKind::ColumnAssumptionsPhase).expect("phase A precedes phase C");
        let plan = match context::find_block(&path, NodeKind::PlanPhase) {
            Some(ParsedBlock::PlanSteps { steps }) => context::render_plan(&steps),
            _ => unreachable!("phase B precedes phase C"),
        };
        let vars = crate::llm::vars([
            ("query", spec.query.clone()),
            ("data_summary", self.data_summary(&spec)?),
            ("column_assumptions", a.serialize()),
            ("plan", plan),
        ]);
        let out = self.generate(templates::PHASEWISE_CODE, vars, &ParseOptions::default())?;
        let node = self.append(NodeKind::CodePhase, NodeContent::Block(out.block))?;
        self.execute(node)?;
        Ok(node)
    }

    /// The fixed first subgoal: load every selected dataset.
    fn loading_step(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let mut code = preamble(self.selected_datasets(&spec));
        for ds in self.selected_datasets(&spec) {
            code.push_str(&format!("print({}.head())\n", ds.binding_name()));
        }
        let block = ParsedBlock::code(code.trim_end());
        let node = self.append(NodeKind::SubgoalCode, NodeContent::Block(block))?;
        self.execute(node)?;
        Ok(node)
    }

    fn next_subgoal(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let path = self.graph()?.active_path();
        let done = path.iter().filter(|n| n.kind == NodeKind::SubgoalAssumptions).count() as u32;
        let subgoal_no = done + 1;
        if subgoal_no > self.max_subgoals {
            return Err(EngineError::MaxSubgoalsExceeded(self.max_subgoals));
        }
        let vars = crate::llm::vars([
            ("query", spec.query.clone()),
            ("data_summary", self.data_summary(&spec)?),
            ("history", context::stepwise_history(&path)),
            ("subgoal_no", subgoal_no.to_string()),
        ]);
        let out = self.generate(templates::STEPWISE_SUBGOAL, vars, &ParseOptions::default())?;
        self.append(NodeKind::SubgoalAssumptions, NodeContent::Block(out.block))
    }

    fn subgoal_code(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let path = self.graph()?.active_path();
        let (current, earlier) = path.split_last().expect("paths are never empty");
        let vars = crate::llm::vars([
            ("query", spec.query.clone()),
            ("data_summary", self.data_summary(&spec)?),
            ("history", context::stepwise_history(earlier)),
            ("subgoal", current.effective().render()),
        ]);
        let out = self.generate(templates::STEPWISE_CODE, vars, &ParseOptions::default())?;
        let node = self.append(NodeKind::SubgoalCode, NodeContent::Block(out.block))?;
        self.execute(node)?;
        Ok(node)
    }

    fn conversational_turn(&mut self) -> Result<NodeId, EngineError> {
        let spec = self.active_spec()?;
        let summary = self.data_summary(&spec)?;
        let path = self.graph()?.active_path();
        let (conversation, prompt) = context::conversation(&path);
        let vars = crate::llm::vars([
            ("data_summary", summary.clone()),
            ("conversation", conversation.clone()),
            ("prompt", prompt.clone()),
        ]);
        let assumptions = self
            .generate(templates::CONVERSATIONAL_ASSUMPTIONS, vars, &ParseOptions::default())?
            .block;
        let vars = crate::llm::vars([
            ("data_summary", summary),
            ("conversation", conversation),
            ("prompt", prompt),
            ("assumptions", assumptions.serialize()),
        ]);
        let code = self.generate(templates::CONVERSATIONAL_CODE, vars, &ParseOptions::default())?.block;
        let node = self.append(NodeKind::ConversationTurn, NodeContent::Turn(Turn::Ai { assumptions, code }))?;
        self.execute(node)?;
        Ok(node)
    }

    // ----- editing -----

    pub fn edit(&mut self, node: NodeId, content: NodeContent) -> Result<EditState, EngineError> {
        self.op(|rt| {
            rt.record(EventBody::NodeEdited { node, content })?;
            Ok(rt.graph()?.node(node)?.edit_state)
        })
    }

    /// Edits a node from text in its block grammar; the root takes plain
    /// query text.
    pub fn edit_text(&mut self, node: NodeId, text: &str) -> Result<EditState, EngineError> {
        let n = self.graph()?.node(node)?;
        let content = match (&n.kind, n.effective()) {
            (NodeKind::InputQuery, NodeContent::Query(spec)) => {
                NodeContent::Query(TaskSpec::new(text, spec.dataset_ids.clone(), spec.strategy)?)
            }
            (NodeKind::ConversationTurn, _) => return Err(GraphError::NotEditable(node).into()),
            (kind, _) => {
                let block_kind = match kind {
                    NodeKind::ColumnAssumptionsPhase => BlockKind::ColumnAssumptions,
                    NodeKind::PlanPhase => BlockKind::PlanSteps,
                    NodeKind::SubgoalAssumptions => BlockKind::AssumptionList,
                    _ => BlockKind::CodeBlock,
                };
                let block = if block_kind == BlockKind::CodeBlock && !text.trim_start().starts_with("```") {
                    ParsedBlock::code(text)
                } else {
                    parse_block(text, block_kind).map_err(|e| EngineError::InvalidEdit(e.to_string()))?
                };
                NodeContent::Block(keep_selection(n.content.block(), block))
            }
        };
        self.edit(node, content)
    }

    pub fn mutate_phase_a(&mut self, node: NodeId, action: &PhaseAAction) -> Result<EditState, EngineError> {
        let n = self.graph()?.node(node)?;
        if self.state.strategy != Strategy::Phasewise {
            return Err(EngineError::WrongStrategy(self.state.strategy));
        }
        if n.kind != NodeKind::ColumnAssumptionsPhase {
            return Err(EngineError::WrongNodeKind(node, NodeKind::ColumnAssumptionsPhase));
        }
        let block = n.content.block().expect("phase A holds a block").clone();
        let known = self.known_columns(&self.active_spec()?);
        let updated = apply_phase_a(&block, action, &known)?;
        self.edit(node, NodeContent::Block(updated))
    }

    pub fn toggle_optional_step(&mut self, node: NodeId, step_index: u32, selected: bool) -> Result<EditState, EngineError> {
        let n = self.graph()?.node(node)?;
        if n.kind != NodeKind::PlanPhase {
            return Err(EngineError::WrongNodeKind(node, NodeKind::PlanPhase));
        }
        let block = n.content.block().expect("plans hold a block").clone();
        let updated = toggle_step(&block, step_index, selected)?;
        self.edit(node, NodeContent::Block(updated))
    }

    pub fn undo(&mut self, node: NodeId) -> Result<(), EngineError> {
        self.op(|rt| rt.record(EventBody::EditUndone { node }))
    }

    /// Submits pending edits, re-executes edited code and regenerates the
    /// components the submit invalidated.
    pub fn submit(&mut self, node: NodeId) -> Result<SubmitReport, EngineError> {
        self.op(|rt| {
            let outcome = rt.graph()?.clone().submit(node)?;
            rt.record(EventBody::EditSubmitted {
                node,
                outcome: outcome.clone(),
            })?;
            let mut report = SubmitReport {
                outcome: outcome.clone(),
                regenerated: Vec::new(),
                regeneration_error: None,
            };
            if let Err(e) = rt.regenerate_downstream(&outcome, &mut report.regenerated) {
                report.regeneration_error = Some(e.info());
            }
            Ok(report)
        })
    }

    /// Re-executes the submitted node if it holds code, then regenerates one
    /// component per invalidated node, top to bottom. User turns are copied.
    fn regenerate_downstream(&mut self, outcome: &SubmitOutcome, out: &mut Vec<NodeId>) -> Result<(), EngineError> {
        if self.graph()?.node(outcome.node)?.effective().code().is_some() {
            self.execute(outcome.node)?;
        }
        let g = self.graph()?;
        let invalidated: Vec<(NodeKind, NodeContent)> = outcome
            .invalidated
            .iter()
            .map(|id| g.node(*id).map(|n| (n.kind, n.effective().clone())))
            .collect::<Result<_, _>>()?;
        for (kind, content) in invalidated {
            if let NodeContent::Turn(Turn::User { .. }) = content {
                out.push(self.append(kind, content)?);
                continue;
            }
            match self.generate_next() {
                Ok(Some(id)) => out.push(id),
                Ok(None) | Err(EngineError::TaskComplete) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Activates a branch and replays its code on a fresh kernel.
    pub fn switch_branch(&mut self, branch: BranchId) -> Result<Vec<ReplayEntry>, EngineError> {
        self.op(|rt| {
            let g = rt.graph()?;
            g.branch(branch)?;
            if g.active_branch() == branch {
                return Ok(Vec::new());
            }
            rt.record(EventBody::BranchSwitched { branch })?;
            rt.replay_active()
        })
    }

    /// Replays the active branch on a fresh kernel and records the results.
    pub fn replay_active(&mut self) -> Result<Vec<ReplayEntry>, EngineError> {
        self.sync_preamble()?;
        let branch = self.graph()?.active_branch();
        let entries = self.exec.replay_branch(self.state.graph()?, branch)?;
        self.record_replay(entries.clone())?;
        self.checkpoint();
        Ok(entries)
    }

    /// Kernel of the active branch, replaying its code first if needed.
    pub fn active_kernel(&mut self) -> Result<Arc<crate::exec::KernelHandle>, EngineError> {
        self.sync_preamble()?;
        let branch = self.graph()?.active_branch();
        let (handle, replayed) = self.exec.kernel_for(self.state.graph()?, branch)?;
        self.record_replay(replayed)?;
        self.checkpoint();
        Ok(handle)
    }
}

fn is_completion(content: &NodeContent) -> bool {
    matches!(content, NodeContent::Block(ParsedBlock::CompletionSignal))
}

/// Text edits of a plan keep the selection state of optional steps whose
/// text is unchanged.
fn keep_selection(old: Option<&ParsedBlock>, new: ParsedBlock) -> ParsedBlock {
    match (old, new) {
        (Some(ParsedBlock::PlanSteps { steps: before }), ParsedBlock::PlanSteps { mut steps }) => {
            for s in steps.iter_mut().filter(|s| s.optional) {
                if let Some(prev) = before.iter().find(|p| p.optional && p.text == s.text) {
                    s.selected = prev.selected;
                }
            }
            ParsedBlock::PlanSteps { steps }
        }
        (_, new) => new,
    }
}
