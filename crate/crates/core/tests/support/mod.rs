#![allow(dead_code)]

pub mod author;
pub mod corpus;
pub mod graph_ops;
pub mod oracle;
pub mod scenario;
pub mod tasks;

use std::path::PathBuf;
use std::sync::Arc;

use decomp_core::llm::{Message, Provider, ProviderError, ScriptedProvider};

pub const RECORD_HINT: &str = "scripted fixtures are out of date; re-record with `cargo test -p decomp-core --test record -- --ignored`";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn scripted_dir() -> PathBuf {
    fixtures_dir().join("scripted")
}

/// Scripted provider over the committed fixtures.
pub fn scripted() -> Arc<dyn Provider> {
    Arc::new(ScriptedProvider::new(scripted_dir()))
}

/// Provider that counts calls, for asserting that no model call was made.
#[derive(Default)]
pub struct Counting<P> {
    pub inner: P,
    pub calls: std::sync::atomic::AtomicUsize,
}

impl<P: Provider> Provider for Counting<P> {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.complete(messages)
    }
}
