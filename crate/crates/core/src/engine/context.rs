//! Prompt variables assembled from a node's context path.
//!
//! Only the effective content of upstream nodes enters a prompt; pending
//! edits, side threads and nodes off the path never do.

use crate::exec::ExecutionResult;
use crate::graph::{ComponentNode, NodeContent, NodeKind, Turn};
use crate::llm::{ParsedBlock, PlanStep};
use crate::task::TaskSpec;

const NOTHING_YET: &str = "(none yet)";

pub(crate) fn root_spec<'a>(path: &[&'a ComponentNode]) -> &'a TaskSpec {
    match path.first().map(|n| n.effective()) {
        Some(NodeContent::Query(spec)) => spec,
        _ => panic!("context path does not start at a query node"),
    }
}

/// Included plan steps only, numbered as in the plan.
pub(crate) fn render_plan(steps: &[PlanStep]) -> String {
    let lines: Vec<String> = steps
        .iter()
        .filter(|s| s.included())
        .map(|s| format!("{}. {}", s.index, s.text))
        .collect();
    lines.join("\n")
}

pub(crate) fn find_block(path: &[&ComponentNode], kind: NodeKind) -> Option<ParsedBlock> {
    path.iter()
        .rev()
        .find(|n| n.kind == kind)
        .and_then(|n| n.effective().block().cloned())
}

fn outcome_line(exec: Option<&ExecutionResult>) -> String {
    match exec {
        None => "Result: not run".into(),
        Some(r) if r.is_ok() => "Result: ran without errors".into(),
        Some(r) => match &r.error {
            Some(e) => format!("Result: {}: {}", e.error_type, e.message),
            None => "Result: error".into(),
        },
    }
}

/// Completed subgoals: every node after the root, in path order.
pub(crate) fn stepwise_history(path: &[&ComponentNode]) -> String {
    let mut parts = Vec::new();
    let mut subgoal = 0;
    for node in path.iter().skip(1) {
        let body = node.effective().render();
        match node.kind {
            NodeKind::SubgoalAssumptions => {
                subgoal += 1;
                parts.push(format!("Subgoal {subgoal}:\n{body}"));
            }
            NodeKind::SubgoalCode if subgoal == 0 => {
                parts.push(format!("Setup code:\n{body}\n{}", outcome_line(node.execution.as_ref())));
            }
            _ => parts.push(format!("Code:\n{body}\n{}", outcome_line(node.execution.as_ref()))),
        }
    }
    if parts.is_empty() {
        NOTHING_YET.into()
    } else {
        parts.join("\n\n")
    }
}

/// Turns before the latest user message, plus that message.
pub(crate) fn conversation(path: &[&ComponentNode]) -> (String, String) {
    let mut lines = Vec::new();
    let mut latest = root_spec(path).query.clone();
    for node in path.iter().skip(1) {
        match node.effective() {
            NodeContent::Turn(Turn::User { prompt }) => {
                lines.push(format!("User: {latest}"));
                latest = prompt.clone();
            }
            NodeContent::Turn(Turn::Ai { assumptions, code }) => {
                lines.push(format!(
                    "Assistant assumptions:\n{}\nAssistant code:\n{}\n{}",
                    assumptions.serialize(),
                    code.serialize(),
                    outcome_line(node.execution.as_ref())
                ));
            }
            _ => {}
        }
    }
    let history = if lines.is_empty() {
        "(start of conversation)".to_string()
    } else {
        lines.join("\n\n")
    };
    (history, latest)
}

/// Anchor context for side threads: the node's content and, for failed
/// code, its traceback.
pub(crate) fn anchor_context(node: &ComponentNode) -> String {
    let mut out = node.content.render();
    if let Some(r) = &node.execution {
        if let Some(e) = &r.error {
            out.push_str(&format!("\n\nThis code failed with {}: {}", e.error_type, e.message));
            if !e.traceback.is_empty() {
                out.push_str(&format!("\n{}", e.traceback));
            }
        }
    }
    out
}
