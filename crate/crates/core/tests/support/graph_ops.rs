//! Random operation sequences over a bare session graph, checked after
//! every step against the structural properties of branching.

use std::collections::{HashMap, HashSet};

use decomp_core::graph::{label_count, BranchId, EditState, NodeContent, NodeId, NodeKind, SessionGraph};
use decomp_core::llm::AssumptionItem;
use decomp_core::{ParsedBlock, Strategy, TaskSpec};
use rand::Rng;

#[derive(Debug, Clone)]
pub enum Op {
    Append(u8),
    Edit(usize, u16),
    Undo(usize),
    Submit(usize),
    Switch(usize),
}

pub fn random_ops(rng: &mut impl Rng, n: usize) -> Vec<Op> {
    (0..n)
        .map(|_| match rng.random_range(0..10) {
            0..=3 => Op::Append(rng.random()),
            4..=5 => Op::Edit(rng.random_range(0..64), rng.random()),
            6 => Op::Undo(rng.random_range(0..64)),
            7..=8 => Op::Submit(rng.random_range(0..64)),
            _ => Op::Switch(rng.random_range(0..64)),
        })
        .collect()
}

fn spec(q: &str) -> TaskSpec {
    TaskSpec::new(q, vec!["ds".into()], Strategy::Stepwise).unwrap()
}

fn content_for(kind: NodeKind, v: u16) -> NodeContent {
    match kind {
        NodeKind::InputQuery => NodeContent::Query(spec(&format!("query {v}"))),
        NodeKind::SubgoalCode | NodeKind::CodePhase => NodeContent::Block(ParsedBlock::code(format!("x = {v}"))),
        _ => NodeContent::Block(ParsedBlock::AssumptionList {
            objective: None,
            items: vec![AssumptionItem::new(&format!("`c{v}` holds data"), "use it")],
        }),
    }
}

type Frozen = Vec<(NodeId, NodeContent)>;

fn frozen(g: &SessionGraph, b: BranchId) -> Frozen {
    g.branch_path(b)
        .unwrap()
        .iter()
        .map(|n| (n.id, n.effective().clone()))
        .collect()
}

fn all_frozen(g: &SessionGraph) -> HashMap<BranchId, Frozen> {
    g.branches().iter().map(|b| (b.id, frozen(g, b.id))).collect()
}

fn descendants(g: &SessionGraph, id: NodeId) -> HashSet<NodeId> {
    let mut out = HashSet::new();
    let mut stack = g.node(id).unwrap().children.clone();
    while let Some(n) = stack.pop() {
        if out.insert(n) {
            stack.extend(g.node(n).unwrap().children.iter().copied());
        }
    }
    out
}

fn structural(g: &SessionGraph) -> Result<(), String> {
    g.check_invariants()?;
    let n = g.nodes().len();
    for node in g.nodes() {
        // acyclicity: the parent chain reaches a root within n steps
        let mut cur = node.parent;
        let mut steps = 0;
        while let Some(p) = cur {
            steps += 1;
            if steps > n {
                return Err(format!("cycle above node {}", node.id));
            }
            cur = g.node(p).unwrap().parent;
        }
        let path = g.context_path(node.id).map_err(|e| e.to_string())?;
        if path.last().map(|l| l.id) != Some(node.id) {
            return Err(format!("context path of {} does not end at it", node.id));
        }
        let below = descendants(g, node.id);
        if path.iter().any(|p| below.contains(&p.id)) {
            return Err(format!("context path of {} contains a descendant", node.id));
        }
        for w in path.windows(2) {
            if w[1].parent != Some(w[0].id) {
                return Err(format!("context path of {} skips a link", node.id));
            }
        }
    }
    for b in g.branches() {
        let len = g.branch_path(b.id).unwrap().len();
        if label_count(&b.label) != Some(len) {
            return Err(format!("branch {} labelled {:?} with {len} nodes", b.id, b.label));
        }
    }
    Ok(())
}

fn unchanged_except(
    before: &HashMap<BranchId, Frozen>,
    g: &SessionGraph,
    except: Option<BranchId>,
    what: &str,
) -> Result<(), String> {
    for (b, path) in before {
        if Some(*b) == except {
            continue;
        }
        if &frozen(g, *b) != path {
            return Err(format!("{what} changed branch {b}"));
        }
    }
    Ok(())
}

/// Applies `ops` to a fresh graph, checking every property after each step.
pub fn check_sequence(ops: &[Op]) -> Result<(), String> {
    let mut g = SessionGraph::new(spec("root"));
    for (step, op) in ops.iter().enumerate() {
        let before = all_frozen(&g);
        let originals: Vec<NodeContent> = g.nodes().iter().map(|n| n.original_content.clone()).collect();
        let active = g.active_branch();
        let path: Vec<NodeId> = g.active_path().iter().map(|n| n.id).collect();
        let at = |i: usize| path[i % path.len()];
        let fail = |msg: String| format!("step {step} ({op:?}): {msg}");

        match *op {
            Op::Append(k) => {
                let kind = if k % 2 == 0 { NodeKind::SubgoalCode } else { NodeKind::SubgoalAssumptions };
                let id = g
                    .append(active, g.active_leaf(), kind, content_for(kind, k as u16))
                    .map_err(|e| fail(e.to_string()))?;
                unchanged_except(&before, &g, Some(active), "append").map_err(fail)?;
                let mut want = before[&active].clone();
                want.push((id, content_for(kind, k as u16)));
                if frozen(&g, active) != want {
                    return Err(fail("active path did not grow by one node".into()));
                }
            }
            Op::Edit(i, v) => {
                let id = at(i);
                let kind = g.node(id).unwrap().kind;
                g.edit(id, content_for(kind, v)).map_err(|e| fail(e.to_string()))?;
                unchanged_except(&before, &g, None, "edit").map_err(fail)?;
            }
            Op::Undo(i) => {
                let id = at(i);
                let pending = g.node(id).unwrap().edit_state == EditState::Pending;
                match (g.undo(id), pending) {
                    (Ok(_), true) | (Err(_), false) => {}
                    (r, _) => return Err(fail(format!("undo gave {r:?} with pending={pending}"))),
                }
                unchanged_except(&before, &g, None, "undo").map_err(fail)?;
            }
            Op::Submit(i) => {
                let pending: Vec<NodeId> = path
                    .iter()
                    .copied()
                    .filter(|n| g.node(*n).unwrap().edit_state == EditState::Pending)
                    .collect();
                if pending.is_empty() {
                    if g.submit(at(i)).is_ok() {
                        return Err(fail("submit without a pending edit succeeded".into()));
                    }
                    continue;
                }
                let id = pending[i % pending.len()];
                let leaf = *path.last().unwrap();
                let branches = g.branches().len();
                let out = g.submit(id).map_err(|e| fail(e.to_string()))?;
                if out.edited != pending[0] {
                    return Err(fail("submit did not target the highest pending node".into()));
                }
                if out.edited == leaf {
                    if out.new_branch.is_some() || g.branches().len() != branches {
                        return Err(fail("leaf edit created a branch".into()));
                    }
                    unchanged_except(&before, &g, Some(active), "leaf submit").map_err(fail)?;
                    let now = frozen(&g, active);
                    if now.len() != before[&active].len() || now[..now.len() - 1] != before[&active][..now.len() - 1] {
                        return Err(fail("leaf submit touched more than the leaf".into()));
                    }
                } else {
                    let nb = out.new_branch.as_ref().ok_or_else(|| fail("upstream edit made no branch".into()))?;
                    if g.branches().len() != branches + 1 || g.active_branch() != nb.id {
                        return Err(fail("new branch not added and activated".into()));
                    }
                    unchanged_except(&before, &g, None, "upstream submit").map_err(fail)?;
                    let depth = path.iter().position(|n| *n == out.edited).unwrap();
                    let new_path: Vec<NodeId> = g.active_path().iter().map(|n| n.id).collect();
                    if new_path[..depth] != path[..depth] || new_path.len() != depth + 1 {
                        return Err(fail("new branch does not fork at the edited node".into()));
                    }
                    if out.invalidated != path[depth + 1..] {
                        return Err(fail("invalidated nodes are not the old downstream".into()));
                    }
                }
            }
            Op::Switch(i) => {
                let b = g.branches()[i % g.branches().len()].id;
                g.switch_branch(b).map_err(|e| fail(e.to_string()))?;
                unchanged_except(&before, &g, None, "switch").map_err(fail)?;
            }
        }
        for (n, orig) in g.nodes().iter().zip(&originals) {
            if &n.original_content != orig {
                return Err(fail(format!("original content of {} changed", n.id)));
            }
        }
        structural(&g).map_err(fail)?;
    }
    Ok(())
}
