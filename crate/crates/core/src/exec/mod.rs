pub mod conformance;
pub mod kernel;
pub mod protocol;
pub mod service;
pub mod stub;

pub use kernel::{BackendSpec, KernelConfig, KernelError, KernelHandle, KernelPool, KernelState};
pub use protocol::{ExecutionResult, Status, VariableSnapshot};
pub use service::{ExecutionService, NodeRun, ReplayEntry, ServiceError};
