use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use decomp_core::engine::{EngineError, PhaseAAction, StrategyState};
use decomp_core::graph::{BranchId, BranchView, NodeContent, NodeId};
use decomp_core::llm::ProviderMode;
use decomp_core::profile::DatasetId;
use decomp_core::service::{lock, ServiceError, SessionSummary};
use decomp_core::session::{Event, SessionExport, SessionState};
use decomp_core::side::{Anchor, ThreadId, ThreadKind};
use decomp_core::{SessionRuntime, Strategy};
use futures_util::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

/// Uploads and imports carry whole datasets.
const UPLOAD_LIMIT: usize = 64 * 1024 * 1024;
const DEFAULT_PAGE_SIZE: u64 = 50;

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Body<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Path), rejection(ApiError))]
struct P<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
struct Q<T>(T);

pub fn api() -> Router<AppState> {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/sessions", get(list).post(create))
        .route("/sessions/import", post(import).layer(DefaultBodyLimit::max(UPLOAD_LIMIT)))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/datasets", post(upload).layer(DefaultBodyLimit::max(UPLOAD_LIMIT)))
        .route("/sessions/{id}/task", post(start_task))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/followup", post(followup))
        .route("/sessions/{id}/nodes/{node}", put(edit))
        .route("/sessions/{id}/nodes/{node}/phase-a", post(phase_a))
        .route("/sessions/{id}/nodes/{node}/steps/{step}", put(toggle_step))
        .route("/sessions/{id}/nodes/{node}/undo", post(undo))
        .route("/sessions/{id}/nodes/{node}/submit", post(submit))
        .route("/sessions/{id}/branches/{branch}/activate", post(switch_branch))
        .route("/sessions/{id}/variables", get(variables))
        .route("/sessions/{id}/variables/{name}", get(variable))
        .route("/sessions/{id}/threads", post(open_thread))
        .route("/sessions/{id}/threads/{thread}/insert", post(insert_snippet))
        .route("/sessions/{id}/threads/{thread}/discard", post(discard_thread))
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    #[serde(flatten)]
    summary: SessionSummary,
    progress: Option<StrategyState>,
    branches: Vec<BranchView>,
    last_seq: u64,
    state_hash: String,
    state: SessionState,
}

fn view(rt: &SessionRuntime) -> SessionView {
    let state = rt.state().clone();
    SessionView {
        summary: SessionSummary::of(&state),
        progress: rt.strategy_state().ok(),
        branches: state.graph.as_ref().map(|g| g.branch_views()).unwrap_or_default(),
        last_seq: rt.last_seq(),
        state_hash: rt.state_hash(),
        state,
    }
}

/// Mutating responses carry the result and the session after it, so a
/// client can redraw without a second request.
#[derive(Debug, Serialize)]
struct Outcome<T> {
    result: T,
    session: SessionView,
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::from)
}

/// Runs `f` on the named session with its lock held.
async fn on_session<T, F>(st: &AppState, id: String, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut SessionRuntime) -> Result<T, EngineError> + Send + 'static,
{
    let manager = st.manager.clone();
    blocking(move || {
        let session = manager.get(&id)?;
        let mut rt = lock(&session);
        Ok(f(&mut rt)?)
    })
    .await
}

async fn mutate<T, F>(st: &AppState, id: String, f: F) -> Result<Json<Outcome<T>>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut SessionRuntime) -> Result<T, EngineError> + Send + 'static,
{
    on_session(st, id, move |rt| {
        let result = f(rt)?;
        Ok(Outcome {
            result,
            session: view(rt),
        })
    })
    .await
    .map(Json)
}

// ----- sessions -----

async fn list(State(st): State<AppState>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let manager = st.manager.clone();
    blocking(move || manager.list()).await.map(Json)
}

#[derive(Deserialize)]
struct CreateRequest {
    strategy: String,
    provider_mode: Option<ProviderMode>,
}

async fn create(State(st): State<AppState>, Body(req): Body<CreateRequest>) -> Result<impl IntoResponse, ApiError> {
    let strategy: Strategy = req.strategy.parse().map_err(|_| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidStrategy",
            format!("unknown strategy {:?}; expected conversational, stepwise or phasewise", req.strategy),
        )
    })?;
    let manager = st.manager.clone();
    let out = blocking(move || {
        let session = manager.create(strategy, req.provider_mode)?;
        let rt = lock(&session);
        Ok(view(&rt))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn show(State(st): State<AppState>, P(id): P<String>) -> Result<Json<SessionView>, ApiError> {
    on_session(&st, id, |rt| Ok(view(rt))).await.map(Json)
}

async fn export(State(st): State<AppState>, P(id): P<String>) -> Result<impl IntoResponse, ApiError> {
    let name = format!("attachment; filename=\"{id}.json\"");
    let text = on_session(&st, id, |rt| Ok(rt.export()?.to_json())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json".to_string()), (header::CONTENT_DISPOSITION, name)], text))
}

async fn import(State(st): State<AppState>, body: String) -> Result<impl IntoResponse, ApiError> {
    let manager = st.manager.clone();
    let out = blocking(move || {
        let export = SessionExport::from_json(&body)?;
        let session = manager.import(export)?;
        let rt = lock(&session);
        Ok(view(&rt))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out)))
}

// ----- events -----

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn events(State(st): State<AppState>, P(id): P<String>, Q(q): Q<Since>) -> Result<Json<Vec<Event>>, ApiError> {
    on_session(&st, id, move |rt| Ok(rt.events_since(q.since).to_vec())).await.map(Json)
}

fn sse_event(ev: &Event) -> SseEvent {
    SseEvent::default()
        .id(ev.seq.to_string())
        .event(ev.body.kind())
        .json_data(ev)
        .expect("events always serialize")
}

/// Backlog after `since` (or `Last-Event-ID`), then live events. A client
/// that falls too far behind is disconnected and resumes from its last id.
async fn stream(
    State(st): State<AppState>,
    P(id): P<String>,
    Q(q): Q<Since>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let since = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .unwrap_or(q.since);
    // load first so an unknown id is a 404, then subscribe before reading
    // the backlog so nothing falls in between
    let manager = st.manager.clone();
    let session = {
        let id = id.clone();
        blocking(move || manager.get(&id)).await?
    };
    let rx = st.hub.subscribe(&id);
    let backlog = blocking(move || Ok(lock(&session).events_since(since).to_vec())).await?;
    let last = backlog.last().map_or(since, |e| e.seq);

    // on lag the stream ends; the client reconnects with Last-Event-ID
    let live = stream::unfold(rx, |mut rx| async move { rx.recv().await.ok().map(|ev| (ev, rx)) })
    .filter(move |ev| std::future::ready(ev.seq > last));
    let out = stream::iter(backlog.into_iter().map(Arc::new))
        .chain(live)
        .map(|ev| Ok(sse_event(&ev)));
    Ok(Sse::new(out).keep_alive(KeepAlive::default()))
}

// ----- datasets and task -----

async fn upload(State(st): State<AppState>, P(id): P<String>, mut form: Multipart) -> Result<impl IntoResponse, ApiError> {
    let bad = |msg: String| ApiError::new(StatusCode::BAD_REQUEST, "InvalidUpload", msg);
    let mut file = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.body_text()))? {
        if field.name() == Some("file") || field.file_name().is_some() {
            let name = field.file_name().unwrap_or("dataset.csv").to_string();
            let bytes = field.bytes().await.map_err(|e| bad(e.body_text()))?;
            file = Some((name, bytes));
            break;
        }
    }
    let (name, bytes) = file.ok_or_else(|| bad("expected a multipart field named \"file\"".into()))?;
    mutate(&st, id, move |rt| rt.add_dataset(&name, &bytes)).await
}

#[derive(Deserialize)]
struct TaskRequest {
    query: String,
    dataset_ids: Vec<DatasetId>,
}

async fn start_task(State(st): State<AppState>, P(id): P<String>, Body(req): Body<TaskRequest>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.start_task(&req.query, req.dataset_ids)).await
}

async fn advance(State(st): State<AppState>, P(id): P<String>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, |rt| rt.advance()).await
}

#[derive(Deserialize)]
struct FollowupRequest {
    prompt: String,
}

#[derive(Serialize)]
struct TurnPair {
    user: NodeId,
    ai: NodeId,
}

async fn followup(State(st): State<AppState>, P(id): P<String>, Body(req): Body<FollowupRequest>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.followup(&req.prompt).map(|(user, ai)| TurnPair { user, ai })).await
}

// ----- editing -----

/// Either text in the node's block grammar or structured content.
#[derive(Deserialize)]
#[serde(untagged)]
enum EditRequest {
    Text { text: String },
    Content { content: NodeContent },
}

async fn edit(State(st): State<AppState>, P((id, node)): P<(String, NodeId)>, Body(req): Body<EditRequest>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| match req {
        EditRequest::Text { text } => rt.edit_text(node, &text),
        EditRequest::Content { content } => rt.edit(node, content),
    })
    .await
}

async fn phase_a(State(st): State<AppState>, P((id, node)): P<(String, NodeId)>, Body(action): Body<PhaseAAction>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.mutate_phase_a(node, &action)).await
}

#[derive(Deserialize)]
struct StepRequest {
    selected: bool,
}

async fn toggle_step(
    State(st): State<AppState>,
    P((id, node, step)): P<(String, NodeId, u32)>,
    Body(req): Body<StepRequest>,
) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.toggle_optional_step(node, step, req.selected)).await
}

async fn undo(State(st): State<AppState>, P((id, node)): P<(String, NodeId)>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.undo(node)).await
}

async fn submit(State(st): State<AppState>, P((id, node)): P<(String, NodeId)>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.submit(node)).await
}

async fn switch_branch(State(st): State<AppState>, P((id, branch)): P<(String, BranchId)>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.switch_branch(branch)).await
}

// ----- variables and side threads -----

async fn variables(State(st): State<AppState>, P(id): P<String>) -> Result<impl IntoResponse, ApiError> {
    on_session(&st, id, |rt| rt.list_variables()).await.map(Json)
}

#[derive(Deserialize)]
struct PageQuery {
    filter: Option<String>,
    #[serde(default)]
    page: u64,
    page_size: Option<u64>,
}

async fn variable(State(st): State<AppState>, P((id, name)): P<(String, String)>, Q(q): Q<PageQuery>) -> Result<impl IntoResponse, ApiError> {
    let size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    on_session(&st, id, move |rt| rt.fetch_variable(&name, q.filter.as_deref(), q.page, size))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct ThreadRequest {
    kind: ThreadKind,
    anchor: Anchor,
    query: String,
}

async fn open_thread(State(st): State<AppState>, P(id): P<String>, Body(req): Body<ThreadRequest>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| match req.kind {
        ThreadKind::AskQuestion => rt.ask_question(req.anchor, &req.query),
        ThreadKind::GenerateCode => rt.generate_code(req.anchor, &req.query),
        ThreadKind::SideQuery => rt.run_side_query(req.anchor, &req.query),
    })
    .await
}

async fn insert_snippet(State(st): State<AppState>, P((id, thread)): P<(String, ThreadId)>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.insert_snippet(thread)).await
}

async fn discard_thread(State(st): State<AppState>, P((id, thread)): P<(String, ThreadId)>) -> Result<impl IntoResponse, ApiError> {
    mutate(&st, id, move |rt| rt.discard_thread(thread)).await
}
