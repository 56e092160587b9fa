//! Kernel backends and handles.
//!
//! A backend speaks the wire protocol one request at a time. A
//! [`KernelHandle`] serializes access with a mutex so executions never
//! interleave; a [`KernelPool`] keeps at most a few handles per session,
//! one per branch, evicting the least recently used.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex, TryLockError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{codes, ExecutionResult, Request, Response, VarPage, VariableSnapshot};
use super::stub::StubKernel;
use crate::graph::BranchId;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_STARTUP_MS: u64 = 10_000;
pub const MAX_KERNELS_PER_SESSION: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum BackendSpec {
    Stub,
    Sidecar { command: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(flatten)]
    pub backend: BackendSpec,
    pub timeout_ms: u64,
    pub startup_timeout_ms: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            backend: BackendSpec::Stub,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            startup_timeout_ms: DEFAULT_STARTUP_MS,
        }
    }
}

impl KernelConfig {
    pub fn sidecar(command: impl Into<String>) -> Self {
        Self {
            backend: BackendSpec::Sidecar { command: command.into() },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum KernelError {
    #[error("kernel failed to start: {0}")]
    KernelStartFailure(String),
    #[error("execution timed out after {0} ms; the kernel was interrupted")]
    ExecutionTimeout(u64),
    #[error("kernel is busy")]
    KernelBusy,
    #[error("kernel is dead: {0}")]
    KernelDead(String),
    #[error("kernel protocol error: {0}")]
    Protocol(String),
    #[error("unknown variable: {0}")]
    UnknownVariable(String),
    #[error("not tabular: {0}")]
    NotTabular(String),
}

pub trait Backend: Send {
    /// Sends one request and waits for its response.
    fn request(&mut self, req: &Request, timeout: Duration) -> Result<Response, KernelError>;
    /// Sends a raw line; used to check handling of malformed input.
    fn request_raw(&mut self, line: &str, timeout: Duration) -> Result<Response, KernelError>;
}

pub struct StubBackend(pub StubKernel);

impl Backend for StubBackend {
    fn request(&mut self, req: &Request, _timeout: Duration) -> Result<Response, KernelError> {
        Ok(self.0.handle(req.clone()))
    }

    fn request_raw(&mut self, line: &str, _timeout: Duration) -> Result<Response, KernelError> {
        let mut out = Vec::new();
        self.0
            .serve(format!("{line}\n").as_bytes(), &mut out)
            .map_err(|e| KernelError::Protocol(e.to_string()))?;
        let text = String::from_utf8_lossy(&out);
        serde_json::from_str(text.trim()).map_err(|e| KernelError::Protocol(e.to_string()))
    }
}

/// A subprocess speaking the protocol over stdin/stdout.
pub struct SidecarBackend {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl SidecarBackend {
    pub fn spawn(command: &str, work_dir: &Path, startup: Duration) -> Result<Self, KernelError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| KernelError::KernelStartFailure(format!("cannot parse command {command:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(work_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| KernelError::KernelStartFailure(format!("{}: {e}", argv[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("kernel-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let Ok(line) = line else { break };
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            })
            .map_err(|e| KernelError::KernelStartFailure(e.to_string()))?;
        let mut backend = Self {
            child,
            stdin,
            lines: rx,
        };
        match backend.request(&Request::Ping, startup) {
            Ok(Response::Pong) => Ok(backend),
            Ok(other) => Err(KernelError::KernelStartFailure(format!("unexpected reply to ping: {other:?}"))),
            Err(e) => Err(KernelError::KernelStartFailure(e.to_string())),
        }
    }

    fn write_line(&mut self, line: &str) -> Result<(), KernelError> {
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| KernelError::KernelDead(e.to_string()))
    }

    /// Waits for the response matching `want`; `None` matches `pong` or an id-less error.
    fn wait(&mut self, want: Option<u64>, is_ping: bool, timeout: Duration) -> Result<Response, KernelError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    let Ok(resp) = serde_json::from_str::<Response>(&line) else {
                        tracing::warn!(%line, "ignoring unparseable kernel output");
                        continue;
                    };
                    let matches = match (&resp, want) {
                        (Response::Pong, _) => is_ping,
                        (r, Some(id)) => r.id() == Some(id),
                        (r, None) => r.id().is_none(),
                    };
                    if matches {
                        return Ok(resp);
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(KernelError::ExecutionTimeout(timeout.as_millis() as u64)),
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self.child.try_wait().ok().flatten();
                    return Err(KernelError::KernelDead(format!("kernel exited ({status:?})")));
                }
            }
        }
    }
}

fn request_id(req: &Request) -> Option<u64> {
    match req {
        Request::Execute { id, .. }
        | Request::FetchVar { id, .. }
        | Request::ListVars { id }
        | Request::Interrupt { id }
        | Request::Reset { id } => Some(*id),
        Request::Ping => None,
    }
}

impl Backend for SidecarBackend {
    fn request(&mut self, req: &Request, timeout: Duration) -> Result<Response, KernelError> {
        let line = serde_json::to_string(req).map_err(|e| KernelError::Protocol(e.to_string()))?;
        self.write_line(&line)?;
        let id = request_id(req);
        match self.wait(id, matches!(req, Request::Ping), timeout) {
            Err(KernelError::ExecutionTimeout(ms)) => {
                if let Some(id) = id {
                    let interrupt = serde_json::to_string(&Request::Interrupt { id }).expect("serializable");
                    let _ = self.write_line(&interrupt);
                }
                Err(KernelError::ExecutionTimeout(ms))
            }
            other => other,
        }
    }

    fn request_raw(&mut self, line: &str, timeout: Duration) -> Result<Response, KernelError> {
        self.write_line(line)?;
        let id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64));
        self.wait(id, false, timeout)
    }
}

impl Drop for SidecarBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelState {
    Starting,
    Idle,
    Busy,
    Dead,
}

impl KernelState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => KernelState::Starting,
            1 => KernelState::Idle,
            2 => KernelState::Busy,
            _ => KernelState::Dead,
        }
    }
}

pub struct KernelHandle {
    pub id: String,
    pub branch: BranchId,
    state: AtomicU8,
    backend: Mutex<Box<dyn Backend>>,
    next_request: AtomicU64,
    timeout: Duration,
}

impl std::fmt::Debug for KernelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelHandle")
            .field("id", &self.id)
            .field("branch", &self.branch)
            .field("state", &self.state())
            .finish()
    }
}

impl KernelHandle {
    pub fn start(config: &KernelConfig, work_dir: &Path, branch: BranchId) -> Result<Self, KernelError> {
        let backend: Box<dyn Backend> = match &config.backend {
            BackendSpec::Stub => Box::new(StubBackend(StubKernel::new(work_dir))),
            BackendSpec::Sidecar { command } => Box::new(SidecarBackend::spawn(
                command,
                work_dir,
                Duration::from_millis(config.startup_timeout_ms),
            )?),
        };
        Ok(Self::with_backend(backend, branch, Duration::from_millis(config.timeout_ms)))
    }

    pub fn with_backend(backend: Box<dyn Backend>, branch: BranchId, timeout: Duration) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            branch,
            state: AtomicU8::new(1),
            backend: Mutex::new(backend),
            next_request: AtomicU64::new(1),
            timeout,
        }
    }

    pub fn state(&self) -> KernelState {
        KernelState::from_u8(self.state.load(Ordering::SeqCst))
    }

    fn set_state(&self, s: KernelState) {
        if self.state() != KernelState::Dead {
            self.state.store(s as u8, Ordering::SeqCst);
        }
    }

    fn next_id(&self) -> u64 {
        self.next_request.fetch_add(1, Ordering::SeqCst)
    }

    fn run(&self, backend: &mut dyn Backend, req: Request) -> Result<Response, KernelError> {
        if self.state() == KernelState::Dead {
            return Err(KernelError::KernelDead("kernel has exited".into()));
        }
        self.set_state(KernelState::Busy);
        let out = backend.request(&req, self.timeout);
        match &out {
            Err(KernelError::KernelDead(_)) => self.state.store(KernelState::Dead as u8, Ordering::SeqCst),
            _ => self.set_state(KernelState::Idle),
        }
        match out? {
            Response::Error { code, message, .. } => Err(match code.as_str() {
                codes::UNKNOWN_VARIABLE => KernelError::UnknownVariable(message),
                codes::NOT_TABULAR => KernelError::NotTabular(message),
                codes::KERNEL_BUSY => KernelError::KernelBusy,
                _ => KernelError::Protocol(format!("{code}: {message}")),
            }),
            other => Ok(other),
        }
    }

    fn locked<T>(&self, f: impl FnOnce(&mut dyn Backend) -> Result<T, KernelError>) -> Result<T, KernelError> {
        let mut guard = self.backend.lock().unwrap_or_else(|p| p.into_inner());
        f(guard.as_mut())
    }

    /// Executes code, waiting for earlier requests on this handle to finish.
    pub fn execute(&self, code: &str) -> Result<ExecutionResult, KernelError> {
        self.locked(|b| self.execute_on(b, code))
    }

    /// Executes code only if the handle is idle.
    pub fn try_execute(&self, code: &str) -> Result<ExecutionResult, KernelError> {
        let mut guard = match self.backend.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(KernelError::KernelBusy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        self.execute_on(guard.as_mut(), code)
    }

    fn execute_on(&self, b: &mut dyn Backend, code: &str) -> Result<ExecutionResult, KernelError> {
        let id = self.next_id();
        match self.run(b, Request::Execute { id, code: code.to_string() })? {
            Response::Result { result, .. } => Ok(result),
            other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }

    /// Runs `f` with exclusive access, so a group of executions is not interleaved with others.
    pub fn exclusive<T>(&self, f: impl FnOnce(&Exclusive<'_>) -> T) -> T {
        let mut guard = self.backend.lock().unwrap_or_else(|p| p.into_inner());
        let ex = Exclusive {
            handle: self,
            backend: Mutex::new(guard.as_mut()),
        };
        f(&ex)
    }

    pub fn list_variables(&self) -> Result<Vec<VariableSnapshot>, KernelError> {
        self.locked(|b| match self.run(b, Request::ListVars { id: self.next_id() })? {
            Response::Vars { variables, .. } => Ok(variables),
            other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
        })
    }

    pub fn fetch_variable(
        &self,
        name: &str,
        filter: Option<&str>,
        page: u64,
        page_size: u64,
    ) -> Result<VarPage, KernelError> {
        self.locked(|b| {
            let req = Request::FetchVar {
                id: self.next_id(),
                name: name.to_string(),
                filter: filter.map(str::to_string),
                page,
                page_size,
            };
            match self.run(b, req)? {
                Response::VarPage { page, .. } => Ok(page),
                other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
            }
        })
    }

    /// Clears the namespace; fails with `KernelBusy` while an execution runs.
    pub fn reset(&self) -> Result<(), KernelError> {
        let mut guard = match self.backend.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(KernelError::KernelBusy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        match self.run(guard.as_mut(), Request::Reset { id: self.next_id() })? {
            Response::Ack { .. } => Ok(()),
            other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }

    pub fn ping(&self) -> Result<(), KernelError> {
        self.locked(|b| match self.run(b, Request::Ping)? {
            Response::Pong => Ok(()),
            other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
        })
    }
}

/// Access to a handle while holding its queue.
pub struct Exclusive<'a> {
    handle: &'a KernelHandle,
    backend: Mutex<&'a mut dyn Backend>,
}

impl Exclusive<'_> {
    pub fn execute(&self, code: &str) -> Result<ExecutionResult, KernelError> {
        let mut b = self.backend.lock().unwrap_or_else(|p| p.into_inner());
        self.handle.execute_on(&mut **b, code)
    }

    pub fn list_variables(&self) -> Result<Vec<VariableSnapshot>, KernelError> {
        let mut b = self.backend.lock().unwrap_or_else(|p| p.into_inner());
        match self.handle.run(&mut **b, Request::ListVars { id: self.handle.next_id() })? {
            Response::Vars { variables, .. } => Ok(variables),
            other => Err(KernelError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }
}

struct PoolEntry {
    branch: BranchId,
    handle: Arc<KernelHandle>,
    last_used: u64,
}

/// Per-session kernels, one per branch, least recently used evicted first.
pub struct KernelPool {
    config: KernelConfig,
    work_dir: PathBuf,
    entries: Vec<PoolEntry>,
    clock: u64,
    capacity: usize,
}

impl KernelPool {
    pub fn new(config: KernelConfig, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            work_dir: work_dir.into(),
            entries: Vec::new(),
            clock: 0,
            capacity: MAX_KERNELS_PER_SESSION,
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn work_dir(&self) -> &Path {
        &self.work_dir
    }

    pub fn get(&mut self, branch: BranchId) -> Option<Arc<KernelHandle>> {
        self.clock += 1;
        let now = self.clock;
        let entry = self.entries.iter_mut().find(|e| e.branch == branch)?;
        if entry.handle.state() == KernelState::Dead {
            return None;
        }
        entry.last_used = now;
        Some(entry.handle.clone())
    }

    /// Returns the branch's kernel, starting one if needed. The flag is true
    /// for a newly started kernel.
    pub fn start(&mut self, branch: BranchId) -> Result<(Arc<KernelHandle>, bool), KernelError> {
        if let Some(h) = self.get(branch) {
            return Ok((h, false));
        }
        self.entries.retain(|e| e.branch != branch);
        if self.entries.len() >= self.capacity {
            if let Some(i) = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(i, _)| i)
            {
                let evicted = self.entries.remove(i);
                tracing::debug!(branch = %evicted.branch, "evicting kernel");
            }
        }
        let handle = Arc::new(KernelHandle::start(&self.config, &self.work_dir, branch)?);
        self.clock += 1;
        self.entries.push(PoolEntry {
            branch,
            handle: handle.clone(),
            last_used: self.clock,
        });
        Ok((handle, true))
    }

    pub fn discard(&mut self, branch: BranchId) {
        self.entries.retain(|e| e.branch != branch);
    }

    pub fn live_branches(&self) -> Vec<BranchId> {
        self.entries.iter().map(|e| e.branch).collect()
    }
}
