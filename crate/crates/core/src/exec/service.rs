//! Runs code components on per-branch kernels.
//!
//! Each kernel remembers which code nodes it has executed. Running a node
//! whose preceding code differs from that record starts a fresh kernel and
//! replays the path first, so a kernel's namespace always matches the
//! branch it belongs to.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kernel::{KernelConfig, KernelError, KernelHandle, KernelPool};
use super::protocol::{ExecError, ExecutionResult, Status};
use crate::graph::{BranchId, GraphError, NodeId, SessionGraph};
use crate::profile::Dataset;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} holds no code")]
    NotCode(NodeId),
    #[error("loading datasets failed: {0}")]
    Preamble(String),
}

/// Outcome of running one node: any replay needed first, then the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRun {
    pub replayed: Vec<ReplayEntry>,
    pub result: ExecutionResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub node: NodeId,
    /// `None` for nodes after the first failing one.
    pub result: Option<ExecutionResult>,
}

fn py_string(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

/// Code run on every fresh kernel: loads each dataset into its `df_` binding.
pub fn preamble<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> String {
    let mut code = String::from("import pandas as pd\n");
    for ds in datasets {
        code.push_str(&format!("{} = pd.read_csv({})\n", ds.binding_name(), py_string(&ds.source_ref)));
    }
    code
}

/// Result recorded on a node whose execution timed out.
pub fn timeout_result(ms: u64) -> ExecutionResult {
    ExecutionResult {
        status: Status::Error,
        stdout: String::new(),
        error: Some(ExecError {
            error_type: "ExecutionTimeout".into(),
            message: format!("execution exceeded {ms} ms and was interrupted"),
            traceback: String::new(),
        }),
        images: vec![],
        variables: vec![],
        duration_ms: ms,
    }
}

pub struct ExecutionService {
    pool: KernelPool,
    preamble: String,
    synced: HashMap<BranchId, Vec<NodeId>>,
}

impl ExecutionService {
    pub fn new(config: KernelConfig, work_dir: impl Into<PathBuf>, preamble: String) -> Self {
        Self {
            pool: KernelPool::new(config, work_dir),
            preamble,
            synced: HashMap::new(),
        }
    }

    pub fn config(&self) -> &KernelConfig {
        self.pool.config()
    }

    pub fn live_branches(&self) -> Vec<BranchId> {
        self.pool.live_branches()
    }

    /// Code nodes on the root path of `leaf`, in order.
    pub fn code_path(graph: &SessionGraph, leaf: NodeId) -> Result<Vec<(NodeId, String)>, GraphError> {
        Ok(graph
            .context_path(leaf)?
            .into_iter()
            .filter_map(|n| n.effective().code().map(|c| (n.id, c.to_string())))
            .collect())
    }

    fn fresh(&mut self, branch: BranchId) -> Result<Arc<KernelHandle>, ServiceError> {
        self.pool.discard(branch);
        self.synced.remove(&branch);
        let (handle, _) = self.pool.start(branch)?;
        let r = handle.execute(&self.preamble)?;
        if let Some(e) = r.error {
            self.pool.discard(branch);
            return Err(ServiceError::Preamble(format!("{}: {}", e.error_type, e.message)));
        }
        self.synced.insert(branch, Vec::new());
        Ok(handle)
    }

    fn run(&mut self, handle: &KernelHandle, branch: BranchId, code: &str) -> Result<ExecutionResult, ServiceError> {
        match handle.execute(code) {
            Ok(r) => Ok(r),
            Err(KernelError::ExecutionTimeout(ms)) => Ok(timeout_result(ms)),
            Err(e) => {
                self.pool.discard(branch);
                self.synced.remove(&branch);
                Err(e.into())
            }
        }
    }

    /// Starts a fresh kernel for `branch` and re-executes its code path.
    /// Stops at the first error; later nodes are reported unexecuted.
    pub fn replay_branch(&mut self, graph: &SessionGraph, branch: BranchId) -> Result<Vec<ReplayEntry>, ServiceError> {
        let leaf = graph.branch(branch)?.leaf_id;
        let path = Self::code_path(graph, leaf)?;
        self.replay(branch, &path)
    }

    fn replay(&mut self, branch: BranchId, path: &[(NodeId, String)]) -> Result<Vec<ReplayEntry>, ServiceError> {
        let handle = self.fresh(branch)?;
        let mut out = Vec::with_capacity(path.len());
        let mut failed = false;
        for (node, code) in path {
            let result = if failed {
                None
            } else {
                let r = self.run(&handle, branch, code)?;
                self.synced.entry(branch).or_default().push(*node);
                failed = !r.is_ok();
                Some(r)
            };
            out.push(ReplayEntry { node: *node, result });
        }
        Ok(out)
    }

    fn is_synced(&mut self, branch: BranchId, prefix: &[(NodeId, String)]) -> Option<Arc<KernelHandle>> {
        let done = self.synced.get(&branch)?;
        if done.len() != prefix.len() || done.iter().zip(prefix).any(|(a, (b, _))| a != b) {
            return None;
        }
        self.pool.get(branch)
    }

    /// Executes one code node on the active branch's kernel, replaying the
    /// preceding code first if the kernel is missing or out of step.
    pub fn execute_node(&mut self, graph: &SessionGraph, node: NodeId) -> Result<NodeRun, ServiceError> {
        let branch = graph.active_branch();
        let code = graph
            .node(node)?
            .effective()
            .code()
            .ok_or(ServiceError::NotCode(node))?
            .to_string();
        let mut prefix = Self::code_path(graph, node)?;
        prefix.pop();
        let (handle, replayed) = match self.is_synced(branch, &prefix) {
            Some(h) => (h, Vec::new()),
            None => {
                let replayed = self.replay(branch, &prefix)?;
                let h = self.pool.get(branch).ok_or(KernelError::KernelDead("kernel lost during replay".into()))?;
                (h, replayed)
            }
        };
        let result = self.run(&handle, branch, &code)?;
        self.synced.entry(branch).or_default().push(node);
        Ok(NodeRun { replayed, result })
    }

    /// Kernel matching the branch's full path, replaying if needed.
    pub fn kernel_for(
        &mut self,
        graph: &SessionGraph,
        branch: BranchId,
    ) -> Result<(Arc<KernelHandle>, Vec<ReplayEntry>), ServiceError> {
        let leaf = graph.branch(branch)?.leaf_id;
        let path = Self::code_path(graph, leaf)?;
        if let Some(h) = self.is_synced(branch, &path) {
            return Ok((h, Vec::new()));
        }
        let replayed = self.replay(branch, &path)?;
        let h = self.pool.get(branch).ok_or(KernelError::KernelDead("kernel lost during replay".into()))?;
        Ok((h, replayed))
    }

    /// Drops all kernels, e.g. after the dataset preamble changed.
    pub fn shutdown(&mut self) {
        for b in self.pool.live_branches() {
            self.pool.discard(b);
        }
        self.synced.clear();
    }

    pub fn set_preamble(&mut self, preamble: String) {
        if preamble != self.preamble {
            self.preamble = preamble;
            self.shutdown();
        }
    }
}
