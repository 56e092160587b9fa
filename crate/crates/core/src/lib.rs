//! Orchestration core for interactive task decomposition in AI-assisted data
//! analysis.
//!
//! The crate is organised around the pieces a session needs:
//!
//! - [`profile`] ingests CSV datasets and produces column profiles plus the
//!   plain-text summary handed to the language model.
//! - [`llm`] renders format-only prompt templates, talks to a live or scripted
//!   provider, and parses responses into typed blocks.
//! - [`graph`] is the session tree: components, pending/submitted edits,
//!   branches and context paths.
//! - [`engine`] drives the Conversational, Stepwise and Phasewise strategies.
//! - [`exec`] is the kernel client: wire protocol, in-process stub kernel,
//!   sidecar subprocess backend, variable snapshots and branch replay.
//! - [`side`] holds anchored side conversations.
//! - [`session`] is event-sourced persistence; [`service`] is the session
//!   registry the HTTP server sits on.

pub mod engine;
pub mod exec;
pub mod graph;
pub mod llm;
pub mod parallel;
pub mod profile;
pub mod service;
pub mod session;
pub mod side;
pub mod task;

pub use engine::{EngineError, SessionRuntime};
pub use graph::{Branch, ComponentNode, NodeKind, SessionGraph};
pub use llm::{ParsedBlock, ProviderConfig};
pub use profile::{ColumnProfile, Dataset};
pub use task::{Strategy, TaskSpec};
