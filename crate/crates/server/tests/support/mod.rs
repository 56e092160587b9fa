#![allow(dead_code)]

// The task table and recorded responses are shared with decomp-core's
// tests, so the API runs against exactly the same fixtures.
#[path = "../../../core/tests/support/tasks.rs"]
pub mod tasks;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use decomp_core::exec::KernelConfig;
use decomp_core::llm::{ProviderConfig, ScriptedProvider};
use decomp_core::service::ServiceConfig;
use decomp_server::{app, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn scripted_state(data_dir: &Path, fixtures: &Path) -> AppState {
    let config = ServiceConfig::new(data_dir, ProviderConfig::scripted(fixtures), KernelConfig::default());
    AppState::new(config, Arc::new(ScriptedProvider::new(fixtures))).unwrap()
}

#[derive(Clone)]
pub struct Client {
    pub app: Router,
}

impl Client {
    /// Scripted provider over the recorded fixtures, stub kernel.
    pub fn scripted(data_dir: &Path) -> Self {
        Self::new(scripted_state(data_dir, &fixtures_dir().join("scripted")), None)
    }

    pub fn new(state: AppState, static_dir: Option<PathBuf>) -> Self {
        Self { app: app(state, static_dir) }
    }

    pub async fn raw(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let (status, bytes) = self.raw(req).await;
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, v)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    pub async fn put(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::PUT, uri, Some(body)).await
    }

    /// Expects `want`; panics with the response body otherwise.
    pub async fn ok(&self, method: Method, uri: &str, body: Option<Value>, want: StatusCode) -> Value {
        let (status, v) = self.call(method.clone(), uri, body).await;
        assert_eq!(status, want, "{method} {uri}: {v}");
        v
    }

    pub async fn create(&self, strategy: &str) -> String {
        let v = self
            .ok(Method::POST, "/api/sessions", Some(serde_json::json!({ "strategy": strategy })), StatusCode::CREATED)
            .await;
        v["id"].as_str().unwrap().to_string()
    }

    pub async fn upload(&self, session: &str, name: &str, bytes: &[u8]) -> (StatusCode, Value) {
        let boundary = "XBOUNDARYX";
        let mut body = format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\nContent-Type: text/csv\r\n\r\n"
        )
        .into_bytes();
        body.extend_from_slice(bytes);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        let req = Request::post(format!("/api/sessions/{session}/datasets"))
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
            .body(Body::from(body))
            .unwrap();
        let (status, bytes) = self.raw(req).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }
}

/// Reads server-sent events from a streaming body until `done` says so.
pub async fn read_sse(body: Body, done: impl Fn(&[(u64, String)]) -> bool) -> Vec<(u64, String)> {
    let mut body = body;
    let mut buf = String::new();
    let mut events = Vec::new();
    while !done(&events) {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame())
            .await
            .expect("event stream stalled")
            .expect("event stream ended")
            .unwrap();
        let Ok(data) = frame.into_data() else { continue };
        buf.push_str(std::str::from_utf8(&data).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut id = None;
            let mut kind = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id: ").or_else(|| line.strip_prefix("id:")) {
                    id = v.trim().parse().ok();
                } else if let Some(v) = line.strip_prefix("event: ").or_else(|| line.strip_prefix("event:")) {
                    kind = v.trim().to_string();
                }
            }
            if let Some(id) = id {
                events.push((id, kind));
            }
        }
    }
    events
}
