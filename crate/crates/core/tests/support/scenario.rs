//! End-to-end flows shared by the integration, record and acceptance targets.

use std::path::Path;
use std::sync::Arc;

use decomp_core::engine::{EngineError, PhaseAAction};
use decomp_core::exec::KernelConfig;
use decomp_core::graph::{ComponentNode, GraphError, NodeContent, NodeKind, Turn};
use decomp_core::llm::{Provider, ProviderConfig, ProviderError};
use decomp_core::session::{SessionDir, SessionState};
use decomp_core::side::{Anchor, Selection, SideThread};
use decomp_core::{ParsedBlock, SessionRuntime, Strategy};

use super::tasks::TaskFixture;
use super::{scripted_dir, RECORD_HINT};

pub const STRATEGIES: [Strategy; 3] = [Strategy::Phasewise, Strategy::Stepwise, Strategy::Conversational];

pub fn describe(e: &EngineError) -> String {
    match e {
        EngineError::Llm(decomp_core::llm::LlmError::Provider(ProviderError::FixtureMissing { request_hash })) => {
            format!("no fixture for request {request_hash}: {RECORD_HINT}")
        }
        other => other.to_string(),
    }
}

fn ctx<T>(what: &str, r: Result<T, EngineError>) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {}", describe(&e)))
}

pub fn new_session(root: &Path, id: &str, strategy: Strategy, provider: Arc<dyn Provider>) -> Result<SessionRuntime, String> {
    let dir = SessionDir::create(root).map_err(|e| e.to_string())?;
    ctx(
        "create",
        SessionRuntime::create(
            dir,
            id,
            strategy,
            ProviderConfig::scripted(scripted_dir()),
            KernelConfig::default(),
            provider,
        ),
    )
}

/// Creates a session for `task`, adds its dataset and starts the task.
pub fn start(root: &Path, task: &TaskFixture, strategy: Strategy, provider: Arc<dyn Provider>) -> Result<SessionRuntime, String> {
    let mut rt = new_session(root, &format!("{}-{}", task.id, strategy.as_str()), strategy, provider)?;
    let ds = ctx("add dataset", rt.add_dataset(task.dataset, &task.dataset_bytes()))?;
    ctx("start task", rt.start_task(task.query, vec![ds.id]))?;
    Ok(rt)
}

/// Drives `task` to completion under `strategy` and checks the shape of
/// the resulting path.
pub fn complete(root: &Path, task: &TaskFixture, strategy: Strategy, provider: Arc<dyn Provider>) -> Result<SessionRuntime, String> {
    let mut rt = start(root, task, strategy, provider)?;
    match strategy {
        Strategy::Phasewise | Strategy::Stepwise => {
            for _ in 0..32 {
                match rt.advance() {
                    Ok(Some(_)) => continue,
                    Err(EngineError::TaskComplete) => break,
                    other => return Err(format!("advance: {:?}", other.map_err(|e| describe(&e)))),
                }
            }
        }
        Strategy::Conversational => {
            for turn in &task.turns[1..] {
                ctx("followup", rt.followup(turn.prompt.expect("follow-up turns carry a prompt")))?;
            }
        }
    }
    check_shape(&rt, strategy)?;
    Ok(rt)
}

fn path_of(rt: &SessionRuntime) -> Result<Vec<&ComponentNode>, String> {
    Ok(rt.graph().map_err(|e| e.to_string())?.active_path())
}

fn check_executions(path: &[&ComponentNode]) -> Result<(), String> {
    for n in path.iter().filter(|n| n.effective().code().is_some()) {
        match &n.execution {
            Some(r) if r.is_ok() => {}
            Some(r) => return Err(format!("node {} failed: {:?}", n.id, r.error)),
            None => return Err(format!("node {} was never executed", n.id)),
        }
    }
    Ok(())
}

/// Strategy-specific invariants of the active path.
pub fn check_shape(rt: &SessionRuntime, strategy: Strategy) -> Result<(), String> {
    let path = path_of(rt)?;
    rt.graph().unwrap().check_invariants()?;
    check_executions(&path)?;
    let kinds: Vec<NodeKind> = path.iter().map(|n| n.kind).collect();
    match strategy {
        Strategy::Phasewise => {
            let want = [
                NodeKind::InputQuery,
                NodeKind::ColumnAssumptionsPhase,
                NodeKind::PlanPhase,
                NodeKind::CodePhase,
            ];
            if kinds != want {
                return Err(format!("phasewise path is {kinds:?}"));
            }
        }
        Strategy::Stepwise => {
            if kinds.len() < 3 || kinds[..2] != [NodeKind::InputQuery, NodeKind::SubgoalCode] {
                return Err(format!("stepwise path does not start with the loading step: {kinds:?}"));
            }
            for (i, k) in kinds[2..].iter().enumerate() {
                let want = if i % 2 == 0 { NodeKind::SubgoalAssumptions } else { NodeKind::SubgoalCode };
                if *k != want {
                    return Err(format!("stepwise alternation broken at {}: {kinds:?}", i + 2));
                }
            }
            let leaf = path.last().unwrap();
            if !matches!(leaf.effective(), NodeContent::Block(ParsedBlock::CompletionSignal)) {
                return Err("stepwise path does not end on the completion signal".into());
            }
            let subgoals = kinds.iter().filter(|k| **k == NodeKind::SubgoalAssumptions).count();
            if subgoals > 10 {
                return Err(format!("{subgoals} subgoals exceed the limit"));
            }
        }
        Strategy::Conversational => {
            for (i, n) in path.iter().enumerate().skip(1) {
                if n.kind != NodeKind::ConversationTurn || n.kind.editable() {
                    return Err(format!("node {} is not a read-only turn", n.id));
                }
                let is_ai = matches!(n.effective(), NodeContent::Turn(Turn::Ai { .. }));
                if is_ai != (i % 2 == 1) {
                    return Err(format!("turns do not alternate at node {}", n.id));
                }
            }
            if path.len() % 2 != 0 {
                return Err("conversation does not end on an AI turn".into());
            }
        }
    }
    Ok(())
}

/// Every turn refuses edits.
pub fn check_turns_locked(rt: &mut SessionRuntime) -> Result<(), String> {
    let ids: Vec<_> = path_of(rt)?.iter().skip(1).map(|n| n.id).collect();
    for id in ids {
        match rt.edit_text(id, "changed") {
            Err(EngineError::Graph(GraphError::NotEditable(n))) if n == id => {}
            other => return Err(format!("editing turn {id} gave {other:?}")),
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct RegenReport {
    pub regenerated: usize,
    pub prompts: usize,
}

fn node_of(rt: &SessionRuntime, kind: NodeKind, nth: usize) -> Result<decomp_core::graph::NodeId, String> {
    path_of(rt)?
        .iter()
        .filter(|n| n.kind == kind)
        .nth(nth)
        .map(|n| n.id)
        .ok_or_else(|| format!("no {kind} #{nth} on the active path"))
}

/// Makes a downstream edit carrying the prior marker, then edits an
/// upstream node with the edit marker. Every prompt of the second
/// regeneration must carry the edit marker and none the prior marker.
pub fn regenerate(rt: &mut SessionRuntime, task: &TaskFixture) -> Result<RegenReport, String> {
    let (edit, prior) = (task.edit_marker(), task.prior_marker());
    let strategy = rt.strategy();
    match strategy {
        Strategy::Phasewise => {
            let plan = node_of(rt, NodeKind::PlanPhase, 0)?;
            let next = task.plan.lines().count() + 1;
            let text = format!("{}\n{next}. Mention {prior} in the output", task.plan);
            ctx("prior edit", rt.edit_text(plan, &text))?;
            submit_ok(rt, plan)?;
        }
        Strategy::Stepwise => {
            let second = node_of(rt, NodeKind::SubgoalAssumptions, 1)?;
            let text = format!("{}\nNote {prior} - keep it", task.subgoals[1].assumptions);
            ctx("prior edit", rt.edit_text(second, &text))?;
            submit_ok(rt, second)?;
        }
        Strategy::Conversational => {}
    }

    let before = rt.prompts().len();
    let target = match strategy {
        Strategy::Phasewise => {
            let a = node_of(rt, NodeKind::ColumnAssumptionsPhase, 0)?;
            let action = PhaseAAction::AddAssumption {
                column: None,
                assumption: format!("The reader expects {edit}"),
                action: format!("label the answer {edit}"),
            };
            ctx("upstream edit", rt.mutate_phase_a(a, &action))?;
            a
        }
        Strategy::Stepwise => {
            let first = node_of(rt, NodeKind::SubgoalAssumptions, 0)?;
            let text = format!("{}\nNote {edit} - keep it", task.subgoals[0].assumptions);
            ctx("upstream edit", rt.edit_text(first, &text))?;
            first
        }
        Strategy::Conversational => {
            let root = node_of(rt, NodeKind::InputQuery, 0)?;
            ctx("upstream edit", rt.edit_text(root, &format!("{} {edit}", task.query)))?;
            root
        }
    };
    let regenerated = submit_ok(rt, target)?;
    check_shape(rt, strategy)?;

    let prompts = &rt.prompts()[before..];
    if prompts.is_empty() {
        return Err("the upstream edit regenerated nothing".into());
    }
    for p in prompts {
        let text: String = p.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        if !text.contains(&edit) {
            return Err(format!("{} prompt lacks the edit marker", p.template));
        }
        if text.contains(&prior) {
            return Err(format!("{} prompt still carries the prior edit", p.template));
        }
    }
    Ok(RegenReport {
        regenerated,
        prompts: prompts.len(),
    })
}

fn submit_ok(rt: &mut SessionRuntime, node: decomp_core::graph::NodeId) -> Result<usize, String> {
    let report = ctx("submit", rt.submit(node))?;
    if let Some(e) = report.regeneration_error {
        return Err(format!("regeneration failed: {} {}", e.code, e.message));
    }
    if report.outcome.new_branch.is_none() {
        return Err(format!("submitting node {node} did not create a branch"));
    }
    Ok(report.regenerated.len())
}

/// Export, import into `root`, then replay the imported log; all three
/// state hashes must match the live one.
pub fn roundtrip(rt: &SessionRuntime, root: &Path, provider: Arc<dyn Provider>) -> Result<String, String> {
    let live = rt.state_hash();
    let text = ctx("export", rt.export())?.to_json();
    let export = decomp_core::session::SessionExport::from_json(&text).map_err(|e| e.to_string())?;
    let dir = SessionDir::create(root).map_err(|e| e.to_string())?;
    let imported = ctx("import", SessionRuntime::import(dir, export, provider.clone(), KernelConfig::default()))?;
    let replayed = SessionState::replay(imported.events()).map_err(|e| e.to_string())?.state_hash();
    let reopened = ctx(
        "reopen",
        SessionRuntime::open(SessionDir::open(root).map_err(|e| e.to_string())?, provider, KernelConfig::default()),
    )?
    .state_hash();
    for (what, h) in [("imported", imported.state_hash()), ("replayed", replayed), ("reopened", reopened)] {
        if h != live {
            return Err(format!("{what} hash {h} differs from live {live}"));
        }
    }
    Ok(live)
}

pub struct SideReport {
    pub ask: SideThread,
    pub generate: SideThread,
    pub inspect: SideThread,
    pub mutate: SideThread,
    pub code_after_insert: String,
}

/// Side threads on the phase C code of a completed phasewise session:
/// a question, a rewrite that is inserted and submitted, and two side
/// queries, the second of which overwrites `result`.
pub fn side_flow(rt: &mut SessionRuntime) -> Result<SideReport, String> {
    let code_node = node_of(rt, NodeKind::CodePhase, 0)?;
    let code = rt.graph().unwrap().node(code_node).unwrap().effective().code().unwrap_or_default().to_string();
    let at = code.find("head(").ok_or("phase C code has no head call")?;
    let start = code[..at].chars().count();
    let selection = Selection::new(start, start + "head(5)".chars().count());
    let anchor = Anchor {
        node: code_node,
        selection: Some(selection),
    };
    let ask = ctx("ask", rt.ask_question(anchor, "What does this call do?"))?;
    let generate = ctx("generate", rt.generate_code(anchor, "Show the last rows instead"))?;
    ctx("insert", rt.insert_snippet(generate.id))?;
    let report = ctx("submit snippet", rt.submit(code_node))?;
    if let Some(e) = report.regeneration_error {
        return Err(format!("re-running the edited code failed: {}", e.message));
    }
    let code_after_insert = rt.graph().unwrap().node(code_node).unwrap().effective().code().unwrap_or_default().to_string();
    let whole = Anchor {
        node: code_node,
        selection: None,
    };
    let inspect = ctx("side query", rt.run_side_query(whole, "How many rows does result hold?"))?;
    let mutate = ctx(
        "mutating side query",
        rt.run_side_query(whole, &format!("{} result with zero", super::author::MUTATING_QUERY)),
    )?;
    let generate = rt.state().thread(generate.id).map_err(|e| e.to_string())?.clone();
    Ok(SideReport {
        ask,
        generate,
        inspect,
        mutate,
        code_after_insert,
    })
}

/// Everything the scripted fixtures must cover.
pub fn corpus(root: &Path, provider: Arc<dyn Provider>) -> Result<(), String> {
    for task in super::tasks::TASKS {
        for strategy in STRATEGIES {
            let dir = root.join(format!("{}-{}", task.id, strategy.as_str()));
            let mut rt = complete(&dir, task, strategy, provider.clone())?;
            regenerate(&mut rt, task)?;
        }
    }
    let mut rt = complete(&root.join("side"), super::tasks::by_id("T1"), Strategy::Phasewise, provider)?;
    side_flow(&mut rt)?;
    Ok(())
}
