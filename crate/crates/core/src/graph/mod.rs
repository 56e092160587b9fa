//! The session tree: components, edit states, branches and context paths.
//!
//! Every branch is a path from an `InputQuery` root to a leaf. Submitting an
//! edit above the active leaf creates a sibling of the edited node on a new
//! branch, which becomes active; the old branch keeps its path untouched.
//! Editing the root query starts a new tree, so the graph is a forest of
//! query roots.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::protocol::ExecutionResult;
use crate::llm::{BlockKind, ParsedBlock};
use crate::task::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    InputQuery,
    ColumnAssumptionsPhase,
    PlanPhase,
    CodePhase,
    SubgoalAssumptions,
    SubgoalCode,
    ConversationTurn,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::InputQuery => "InputQuery",
            NodeKind::ColumnAssumptionsPhase => "ColumnAssumptionsPhase",
            NodeKind::PlanPhase => "PlanPhase",
            NodeKind::CodePhase => "CodePhase",
            NodeKind::SubgoalAssumptions => "SubgoalAssumptions",
            NodeKind::SubgoalCode => "SubgoalCode",
            NodeKind::ConversationTurn => "ConversationTurn",
        }
    }

    pub fn is_code(self) -> bool {
        matches!(self, NodeKind::CodePhase | NodeKind::SubgoalCode)
    }

    pub fn editable(self) -> bool {
        self != NodeKind::ConversationTurn
    }

    /// Whether `content` has the shape this kind of node holds.
    pub fn accepts(self, content: &NodeContent) -> bool {
        match (self, content) {
            (NodeKind::InputQuery, NodeContent::Query(_)) => true,
            (NodeKind::ConversationTurn, NodeContent::Turn(_)) => true,
            (kind, NodeContent::Block(b)) => matches!(
                (kind, b.kind()),
                (NodeKind::ColumnAssumptionsPhase, BlockKind::ColumnAssumptions)
                    | (NodeKind::PlanPhase, BlockKind::PlanSteps)
                    | (NodeKind::CodePhase | NodeKind::SubgoalCode, BlockKind::CodeBlock)
                    | (NodeKind::SubgoalAssumptions, BlockKind::AssumptionList | BlockKind::CompletionSignal)
            ),
            _ => false,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Turn {
    User { prompt: String },
    Ai { assumptions: ParsedBlock, code: ParsedBlock },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum NodeContent {
    Query(TaskSpec),
    Block(ParsedBlock),
    Turn(Turn),
}

impl NodeContent {
    pub fn block(&self) -> Option<&ParsedBlock> {
        match self {
            NodeContent::Block(b) => Some(b),
            _ => None,
        }
    }

    /// Code to run for this content, if it carries any.
    pub fn code(&self) -> Option<&str> {
        match self {
            NodeContent::Block(b) => b.code_text(),
            NodeContent::Turn(Turn::Ai { code, .. }) => code.code_text(),
            _ => None,
        }
    }

    /// Text form used in prompt contexts.
    pub fn render(&self) -> String {
        match self {
            NodeContent::Query(spec) => spec.query.clone(),
            NodeContent::Block(b) => b.serialize(),
            NodeContent::Turn(Turn::User { prompt }) => prompt.clone(),
            NodeContent::Turn(Turn::Ai { assumptions, code }) => {
                format!("{}\n{}", assumptions.serialize(), code.serialize())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditState {
    Clean,
    Pending,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Content as generated; never changes.
    pub original_content: NodeContent,
    /// Last submitted content, if an edit was ever submitted in place.
    pub committed_content: Option<NodeContent>,
    /// What the user currently sees, including a pending edit.
    pub content: NodeContent,
    pub edit_state: EditState,
    /// Latest execution for code-bearing nodes; `None` when not executed.
    pub execution: Option<ExecutionResult>,
}

impl ComponentNode {
    /// Content that feeds prompt contexts and execution: pending edits are ignored.
    pub fn effective(&self) -> &NodeContent {
        self.committed_content.as_ref().unwrap_or(&self.original_content)
    }

    fn baseline_state(&self) -> EditState {
        if self.committed_content.is_some() {
            EditState::Submitted
        } else {
            EditState::Clean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub label: String,
    pub leaf_id: NodeId,
    /// Branch and node the edit was made against; `None` for the first branch.
    pub created_from: Option<(BranchId, NodeId)>,
    /// Label stem without the node count, e.g. `edited PlanPhase@2`.
    pub origin: String,
}

fn label(origin: &str, nodes: usize) -> String {
    let unit = if nodes == 1 { "node" } else { "nodes" };
    format!("{origin}, {nodes} {unit}")
}

/// Node count recorded in a branch label.
pub fn label_count(label: &str) -> Option<usize> {
    let tail = label.rsplit(", ").next()?;
    tail.split(' ').next()?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("branch {0} is not active or its leaf has moved")]
    StaleBranch(BranchId),
    #[error("node {0} is not editable")]
    NotEditable(NodeId),
    #[error("node {0} has no pending edit")]
    NothingPending(NodeId),
    #[error("node {0} is not on the active branch")]
    NotOnActivePath(NodeId),
    #[error("content does not fit a {0} node")]
    ContentMismatch(NodeKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    /// The node whose edit was applied; the highest pending node on the path.
    pub edited: NodeId,
    /// Node now carrying the submitted content; differs from `edited` when a branch was created.
    pub node: NodeId,
    pub new_branch: Option<Branch>,
    pub invalidated: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchView {
    #[serde(flatten)]
    pub branch: Branch,
    pub active: bool,
    pub has_pending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionGraph {
    nodes: Vec<ComponentNode>,
    branches: Vec<Branch>,
    active_branch: BranchId,
}

impl SessionGraph {
    /// A graph with a single query root on an initial branch.
    pub fn new(spec: TaskSpec) -> Self {
        let root = ComponentNode {
            id: NodeId(1),
            kind: NodeKind::InputQuery,
            parent: None,
            children: Vec::new(),
            original_content: NodeContent::Query(spec.clone()),
            committed_content: None,
            content: NodeContent::Query(spec),
            edit_state: EditState::Clean,
            execution: None,
        };
        let origin = "initial".to_string();
        Self {
            nodes: vec![root],
            branches: vec![Branch {
                id: BranchId(1),
                label: label(&origin, 1),
                leaf_id: NodeId(1),
                created_from: None,
                origin,
            }],
            active_branch: BranchId(1),
        }
    }

    pub fn nodes(&self) -> &[ComponentNode] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn active_branch(&self) -> BranchId {
        self.active_branch
    }

    pub fn node(&self, id: NodeId) -> Result<&ComponentNode, GraphError> {
        id.0
            .checked_sub(1)
            .and_then(|i| self.nodes.get(i as usize))
            .ok_or(GraphError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut ComponentNode, GraphError> {
        id.0
            .checked_sub(1)
            .and_then(|i| self.nodes.get_mut(i as usize))
            .ok_or(GraphError::UnknownNode(id))
    }

    pub fn branch(&self, id: BranchId) -> Result<&Branch, GraphError> {
        self.branches
            .iter()
            .find(|b| b.id == id)
            .ok_or(GraphError::UnknownBranch(id))
    }

    fn branch_mut(&mut self, id: BranchId) -> Result<&mut Branch, GraphError> {
        self.branches
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(GraphError::UnknownBranch(id))
    }

    pub fn active(&self) -> &Branch {
        self.branch(self.active_branch).expect("active branch exists")
    }

    pub fn active_leaf(&self) -> NodeId {
        self.active().leaf_id
    }

    /// Root-first path ending at `id`.
    pub fn context_path(&self, id: NodeId) -> Result<Vec<&ComponentNode>, GraphError> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            let node = self.node(n)?;
            out.push(node);
            cur = node.parent;
        }
        out.reverse();
        Ok(out)
    }

    pub fn path_ids(&self, id: NodeId) -> Result<Vec<NodeId>, GraphError> {
        Ok(self.context_path(id)?.iter().map(|n| n.id).collect())
    }

    pub fn active_path(&self) -> Vec<&ComponentNode> {
        self.context_path(self.active_leaf()).expect("active leaf exists")
    }

    pub fn branch_path(&self, id: BranchId) -> Result<Vec<&ComponentNode>, GraphError> {
        self.context_path(self.branch(id)?.leaf_id)
    }

    pub fn on_active_path(&self, id: NodeId) -> bool {
        self.active_path().iter().any(|n| n.id == id)
    }

    pub fn root(&self) -> &ComponentNode {
        self.active_path()[0]
    }

    pub fn branch_views(&self) -> Vec<BranchView> {
        self.branches
            .iter()
            .map(|b| BranchView {
                branch: b.clone(),
                active: b.id == self.active_branch,
                has_pending: self
                    .context_path(b.leaf_id)
                    .map(|p| p.iter().any(|n| n.edit_state == EditState::Pending))
                    .unwrap_or(false),
            })
            .collect()
    }

    fn refresh_label(&mut self, id: BranchId) -> Result<(), GraphError> {
        let leaf = self.branch(id)?.leaf_id;
        let n = self.context_path(leaf)?.len();
        let b = self.branch_mut(id)?;
        b.label = label(&b.origin, n);
        Ok(())
    }

    /// Appends a node under `parent`, which must be the leaf of the active `branch`.
    pub fn append(
        &mut self,
        branch: BranchId,
        parent: NodeId,
        kind: NodeKind,
        content: NodeContent,
    ) -> Result<NodeId, GraphError> {
        let b = self.branch(branch)?;
        if branch != self.active_branch || b.leaf_id != parent {
            return Err(GraphError::StaleBranch(branch));
        }
        if kind == NodeKind::InputQuery || !kind.accepts(&content) {
            return Err(GraphError::ContentMismatch(kind));
        }
        let id = NodeId(self.nodes.len() as u64 + 1);
        self.nodes.push(ComponentNode {
            id,
            kind,
            parent: Some(parent),
            children: Vec::new(),
            original_content: content.clone(),
            committed_content: None,
            content,
            edit_state: EditState::Clean,
            execution: None,
        });
        self.node_mut(parent)?.children.push(id);
        self.branch_mut(branch)?.leaf_id = id;
        self.refresh_label(branch)?;
        Ok(id)
    }

    /// Replaces a node's visible content. Editing back to the baseline
    /// content clears the pending state.
    pub fn edit(&mut self, id: NodeId, content: NodeContent) -> Result<EditState, GraphError> {
        let node = self.node(id)?;
        if !node.kind.editable() {
            return Err(GraphError::NotEditable(id));
        }
        if !node.kind.accepts(&content) {
            return Err(GraphError::ContentMismatch(node.kind));
        }
        if !self.on_active_path(id) {
            return Err(GraphError::NotOnActivePath(id));
        }
        let node = self.node_mut(id)?;
        node.edit_state = if &content == node.effective() {
            node.baseline_state()
        } else {
            EditState::Pending
        };
        node.content = content;
        Ok(node.edit_state)
    }

    /// Restores the baseline content of a pending node.
    pub fn undo(&mut self, id: NodeId) -> Result<EditState, GraphError> {
        let node = self.node_mut(id)?;
        if node.edit_state != EditState::Pending {
            return Err(GraphError::NothingPending(id));
        }
        node.content = node.effective().clone();
        node.edit_state = node.baseline_state();
        Ok(node.edit_state)
    }

    /// The highest pending node on the active path.
    pub fn highest_pending(&self) -> Option<NodeId> {
        self.active_path()
            .into_iter()
            .find(|n| n.edit_state == EditState::Pending)
            .map(|n| n.id)
    }

    /// Submits pending edits on the active path, collapsing them into one
    /// event at the highest pending node. `id` must itself be pending.
    pub fn submit(&mut self, id: NodeId) -> Result<SubmitOutcome, GraphError> {
        if self.node(id)?.edit_state != EditState::Pending {
            return Err(GraphError::NothingPending(id));
        }
        if !self.on_active_path(id) {
            return Err(GraphError::NotOnActivePath(id));
        }
        let target = self.highest_pending().expect("id is pending on the active path");
        let leaf = self.active_leaf();
        if target == leaf {
            let node = self.node_mut(target)?;
            node.committed_content = Some(node.content.clone());
            node.edit_state = EditState::Submitted;
            return Ok(SubmitOutcome {
                edited: target,
                node: target,
                new_branch: None,
                invalidated: Vec::new(),
            });
        }

        let path = self.path_ids(leaf)?;
        let depth = path.iter().position(|n| *n == target).expect("target on path");
        let invalidated = path[depth + 1..].to_vec();
        let old = self.node(target)?.clone();
        let new_id = NodeId(self.nodes.len() as u64 + 1);
        self.nodes.push(ComponentNode {
            id: new_id,
            kind: old.kind,
            parent: old.parent,
            children: Vec::new(),
            original_content: old.original_content.clone(),
            committed_content: Some(old.content.clone()),
            content: old.content.clone(),
            edit_state: EditState::Submitted,
            execution: None,
        });
        if let Some(p) = old.parent {
            self.node_mut(p)?.children.push(new_id);
        }
        let restored = self.node_mut(target)?;
        restored.content = restored.effective().clone();
        restored.edit_state = restored.baseline_state();

        let origin = format!("edited {}@{depth}", old.kind);
        let branch = Branch {
            id: BranchId(self.branches.iter().map(|b| b.id.0).max().unwrap_or(0) + 1),
            label: label(&origin, depth + 1),
            leaf_id: new_id,
            created_from: Some((self.active_branch, target)),
            origin,
        };
        self.active_branch = branch.id;
        self.branches.push(branch.clone());
        Ok(SubmitOutcome {
            edited: target,
            node: new_id,
            new_branch: Some(branch),
            invalidated,
        })
    }

    /// Makes `id` the active branch. Returns false when it already was.
    pub fn switch_branch(&mut self, id: BranchId) -> Result<bool, GraphError> {
        self.branch(id)?;
        if id == self.active_branch {
            return Ok(false);
        }
        self.active_branch = id;
        Ok(true)
    }

    pub fn set_execution(&mut self, id: NodeId, result: Option<ExecutionResult>) -> Result<(), GraphError> {
        self.node_mut(id)?.execution = result;
        Ok(())
    }

    /// Checks structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.0 != i as u64 + 1 {
                return Err(format!("node at index {i} has id {}", n.id));
            }
            match n.parent {
                None if n.kind != NodeKind::InputQuery => return Err(format!("node {} has no parent", n.id)),
                Some(_) if n.kind == NodeKind::InputQuery => return Err(format!("query node {} has a parent", n.id)),
                Some(p) if p >= n.id => return Err(format!("node {} has a later parent {p}", n.id)),
                Some(p) => {
                    let parent = self.node(p).map_err(|e| e.to_string())?;
                    if parent.children.iter().filter(|c| **c == n.id).count() != 1 {
                        return Err(format!("node {} not listed once under {p}", n.id));
                    }
                }
                None => {}
            }
            for c in &n.children {
                if self.node(*c).map_err(|e| e.to_string())?.parent != Some(n.id) {
                    return Err(format!("child {c} of {} points elsewhere", n.id));
                }
            }
            if n.edit_state == EditState::Pending && &n.content == n.effective() {
                return Err(format!("node {} pending without a change", n.id));
            }
            if n.edit_state != EditState::Pending && &n.content != n.effective() {
                return Err(format!("node {} changed without being pending", n.id));
            }
            if n.kind == NodeKind::ConversationTurn && n.edit_state != EditState::Clean {
                return Err(format!("conversation turn {} is not clean", n.id));
            }
        }
        if self.branches.iter().filter(|b| b.id == self.active_branch).count() != 1 {
            return Err("active branch missing".into());
        }
        for b in &self.branches {
            let leaf = self.node(b.leaf_id).map_err(|e| e.to_string())?;
            if !leaf.children.is_empty() {
                return Err(format!("leaf {} of branch {} has children", b.leaf_id, b.id));
            }
            let n = self.context_path(b.leaf_id).map_err(|e| e.to_string())?.len();
            if label_count(&b.label) != Some(n) {
                return Err(format!("branch {} label {:?} but path has {n} nodes", b.id, b.label));
            }
        }
        Ok(())
    }
}
