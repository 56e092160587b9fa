//! LLM providers: a live OpenAI-compatible chat endpoint and a scripted
//! stand-in that replays stored responses keyed by request hash.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::template::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub model_name: String,
    /// Base URL; requests go to `<endpoint>/chat/completions`. Ignored in scripted mode.
    pub endpoint: String,
    /// Name of the environment variable holding the API key. Ignored in scripted mode.
    pub credential_ref: String,
    pub max_retries: u32,
    pub fixture_dir: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Live,
            model_name: "gpt-4-turbo".into(),
            endpoint: "https://api.openai.com/v1".into(),
            credential_ref: "OPENAI_API_KEY".into(),
            max_retries: 2,
            fixture_dir: None,
        }
    }
}

impl ProviderConfig {
    pub fn scripted(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: ProviderMode::Scripted,
            fixture_dir: Some(fixture_dir.into()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider unavailable (request {request_hash}): {reason}")]
    ProviderUnavailable { request_hash: String, reason: String },
    #[error("no scripted fixture for request {request_hash}")]
    FixtureMissing { request_hash: String },
}

impl ProviderError {
    pub fn request_hash(&self) -> &str {
        match self {
            ProviderError::ProviderUnavailable { request_hash, .. } | ProviderError::FixtureMissing { request_hash } => {
                request_hash
            }
        }
    }
}

/// Stable hash of a rendered message list: sha256 over
/// `role 0x1F content 0x1E` for each message, hex encoded.
pub fn request_hash(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0x1f]);
        h.update(m.content.as_bytes());
        h.update([0x1e]);
    }
    hex::encode(h.finalize())
}

pub trait Provider: Send + Sync {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    dir: PathBuf,
}

impl ScriptedProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn fixture_path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.txt"))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        let request_hash = request_hash(messages);
        match std::fs::read(self.fixture_path(&request_hash)) {
            Ok(bytes) => String::from_utf8(bytes).map_err(|e| ProviderError::ProviderUnavailable {
                request_hash,
                reason: format!("fixture is not UTF-8: {e}"),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ProviderError::FixtureMissing { request_hash }),
            Err(e) => Err(ProviderError::ProviderUnavailable {
                request_hash,
                reason: e.to_string(),
            }),
        }
    }
}

pub struct LiveProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    credential_ref: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl LiveProvider {
    pub fn new(config: &ProviderConfig, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            model: config.model_name.clone(),
            credential_ref: config.credential_ref.clone(),
        }
    }
}

impl Provider for LiveProvider {
    fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        let request_hash = request_hash(messages);
        let unavailable = |reason: String| ProviderError::ProviderUnavailable {
            request_hash: request_hash.clone(),
            reason,
        };
        let key = std::env::var(&self.credential_ref)
            .map_err(|_| unavailable(format!("environment variable {} is not set", self.credential_ref)))?;
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: 0.0,
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| unavailable(e.to_string()))?;
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(|e| unavailable(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| unavailable("response has no message content".into()))
    }
}

pub fn from_config(config: &ProviderConfig) -> Arc<dyn Provider> {
    match config.mode {
        ProviderMode::Scripted => Arc::new(ScriptedProvider::new(config.fixture_dir.clone().unwrap_or_default())),
        ProviderMode::Live => Arc::new(LiveProvider::new(config, Duration::from_secs(120))),
    }
}
