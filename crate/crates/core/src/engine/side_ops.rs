//! Side-thread operations. None of them touches the main context; only
//! `insert_snippet` edits a node, and it does so through a normal pending
//! edit.

use super::{context, EngineError, SessionRuntime, Strategy};
use crate::exec::protocol::VarPage;
use crate::exec::service::timeout_result;
use crate::exec::{KernelError, VariableSnapshot};
use crate::graph::{EditState, NodeContent, NodeKind};
use crate::llm::{templates, ParseOptions, ParsedBlock};
use crate::session::EventBody;
use crate::side::{mutated_variables, Anchor, SideError, SideThread, ThreadId, ThreadKind, ThreadResponse, ThreadStatus};

const NO_SELECTION: &str = "(no selection: the question is about the whole block)";

fn describe(vars: &[VariableSnapshot]) -> String {
    if vars.is_empty() {
        return "(no variables yet)".into();
    }
    vars.iter()
        .map(|v| {
            let shape = v.shape.map(|(r, c)| format!(", shape {r}x{c}")).unwrap_or_default();
            format!("{} ({}, {}{shape})", v.name, v.type_label, serde_json::to_value(v.kind).unwrap().as_str().unwrap_or(""))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl SessionRuntime {
    fn side_allowed(&self) -> Result<(), EngineError> {
        if self.state.strategy == Strategy::Conversational {
            return Err(SideError::Unavailable.into());
        }
        Ok(())
    }

    fn next_thread_id(&self) -> ThreadId {
        ThreadId(self.state.threads.iter().map(|t| t.id.0).max().unwrap_or(0) + 1)
    }

    /// Checks the anchor and returns the selected text, if any.
    fn resolve_anchor(&self, anchor: &Anchor) -> Result<Option<String>, EngineError> {
        let node = self.graph()?.node(anchor.node)?;
        match anchor.selection {
            None => Ok(None),
            Some(sel) => {
                let code = node.content.code().ok_or(SideError::NotCodeAnchor(anchor.node))?;
                Ok(Some(sel.slice(code)?.to_string()))
            }
        }
    }

    fn open_thread(&mut self, anchor: Anchor, kind: ThreadKind, query: &str, response: ThreadResponse) -> Result<SideThread, EngineError> {
        let stale = !self.graph()?.on_active_path(anchor.node);
        let thread = SideThread {
            id: self.next_thread_id(),
            anchor,
            kind,
            query: query.to_string(),
            response: Some(response),
            status: ThreadStatus::Answered,
            stale,
        };
        self.record(EventBody::ThreadOpened { thread: thread.clone() })?;
        Ok(thread)
    }

    fn anchor_text(&self, anchor: &Anchor) -> Result<String, EngineError> {
        Ok(context::anchor_context(self.graph()?.node(anchor.node)?))
    }

    pub fn ask_question(&mut self, anchor: Anchor, query: &str) -> Result<SideThread, EngineError> {
        self.op(|rt| {
            rt.side_allowed()?;
            if query.trim().is_empty() {
                return Err(EngineError::EmptyPrompt);
            }
            let selection = rt.resolve_anchor(&anchor)?;
            let vars = crate::llm::vars([
                ("context", rt.anchor_text(&anchor)?),
                ("selection", selection.unwrap_or_else(|| NO_SELECTION.to_string())),
                ("question", query.trim().to_string()),
            ]);
            let out = rt.generate(templates::SIDE_ASK, vars, &ParseOptions::default())?;
            let text = match out.block {
                ParsedBlock::AnswerText { text } => text,
                other => other.serialize(),
            };
            rt.open_thread(anchor, ThreadKind::AskQuestion, query, ThreadResponse::Answer { text })
        })
    }

    pub fn generate_code(&mut self, anchor: Anchor, query: &str) -> Result<SideThread, EngineError> {
        self.op(|rt| {
            rt.side_allowed()?;
            if query.trim().is_empty() {
                return Err(EngineError::EmptyPrompt);
            }
            let selection = rt.resolve_anchor(&anchor)?.ok_or(SideError::SelectionRequired)?;
            let vars = crate::llm::vars([
                ("context", rt.anchor_text(&anchor)?),
                ("selection", selection),
                ("instruction", query.trim().to_string()),
            ]);
            let block = rt.generate(templates::SIDE_GENERATE, vars, &ParseOptions::default())?.block;
            rt.open_thread(anchor, ThreadKind::GenerateCode, query, ThreadResponse::Code { block })
        })
    }

    /// Splices a generated snippet over the anchored selection as a pending edit.
    pub fn insert_snippet(&mut self, thread: ThreadId) -> Result<EditState, EngineError> {
        self.op(|rt| {
            let t = rt.state.thread(thread)?.clone();
            if t.kind != ThreadKind::GenerateCode {
                return Err(SideError::NotInsertable(thread).into());
            }
            let snippet = match (&t.status, &t.response) {
                (ThreadStatus::Answered, Some(ThreadResponse::Code { block })) => {
                    block.code_text().unwrap_or_default().to_string()
                }
                _ => return Err(SideError::ThreadNotAnswered(thread).into()),
            };
            let g = rt.graph()?;
            if !g.on_active_path(t.anchor.node) {
                return Err(SideError::AnchorNodeGone(t.anchor.node).into());
            }
            let node = g.node(t.anchor.node)?;
            let sel = t.anchor.selection.ok_or(SideError::SelectionRequired)?;
            let content = match &node.content {
                NodeContent::Block(ParsedBlock::CodeBlock { code, language_tag }) => NodeContent::Block(ParsedBlock::CodeBlock {
                    code: sel.splice(code, &snippet)?,
                    language_tag: language_tag.clone(),
                }),
                _ => return Err(SideError::NotCodeAnchor(t.anchor.node).into()),
            };
            rt.record(EventBody::NodeEdited {
                node: t.anchor.node,
                content,
            })?;
            let mut updated = t;
            updated.status = ThreadStatus::Inserted;
            rt.record(EventBody::ThreadUpdated { thread: updated.clone() })?;
            Ok(rt.graph()?.node(updated.anchor.node)?.edit_state)
        })
    }

    pub fn discard_thread(&mut self, thread: ThreadId) -> Result<SideThread, EngineError> {
        self.op(|rt| {
            let mut t = rt.state.thread(thread)?.clone();
            t.status = ThreadStatus::Discarded;
            rt.record(EventBody::ThreadUpdated { thread: t.clone() })?;
            Ok(t)
        })
    }

    /// Generates and runs exploratory code on the active branch's kernel.
    /// The result stays in the thread; changed variables are reported.
    pub fn run_side_query(&mut self, anchor: Anchor, query: &str) -> Result<SideThread, EngineError> {
        self.op(|rt| {
            rt.side_allowed()?;
            if query.trim().is_empty() {
                return Err(EngineError::EmptyPrompt);
            }
            let g = rt.graph()?;
            let node = g.node(anchor.node)?;
            let anchor_ok = node.kind.is_code() || node.kind == NodeKind::ColumnAssumptionsPhase;
            if !anchor_ok {
                return Err(SideError::NotCodeAnchor(anchor.node).into());
            }
            if !g.on_active_path(anchor.node) {
                return Err(SideError::AnchorNodeGone(anchor.node).into());
            }
            rt.resolve_anchor(&anchor)?;
            let spec = rt.active_spec()?;
            let handle = rt.active_kernel()?;
            let current = handle.list_variables()?;
            let vars = crate::llm::vars([
                (
                    "context",
                    format!("{}\n\n{}", rt.data_summary(&spec)?, rt.anchor_text(&anchor)?),
                ),
                ("variables", describe(&current)),
                ("question", query.trim().to_string()),
            ]);
            let block = rt.generate(templates::SIDE_QUERY, vars, &ParseOptions::default())?.block;
            let code = block.code_text().unwrap_or_default().to_string();
            let run = handle.exclusive(|ex| -> Result<_, KernelError> {
                let before = ex.list_variables()?;
                let result = match ex.execute(&code) {
                    Err(KernelError::ExecutionTimeout(ms)) => timeout_result(ms),
                    other => other?,
                };
                let after = ex.list_variables()?;
                Ok((result, mutated_variables(&before, &after)))
            });
            let response = match run {
                Ok((result, changed)) => ThreadResponse::QueryResult {
                    block,
                    result,
                    mutation_warning: (!changed.is_empty()).then_some(changed),
                },
                Err(e) => ThreadResponse::Failed { message: e.to_string() },
            };
            rt.open_thread(anchor, ThreadKind::SideQuery, query, response)
        })
    }

    pub fn list_variables(&mut self) -> Result<Vec<VariableSnapshot>, EngineError> {
        let handle = self.active_kernel()?;
        Ok(handle.list_variables()?)
    }

    pub fn fetch_variable(&mut self, name: &str, filter: Option<&str>, page: u64, page_size: u64) -> Result<VarPage, EngineError> {
        let handle = self.active_kernel()?;
        Ok(handle.fetch_variable(name, filter, page, page_size)?)
    }
}
