use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::{broadcast, oneshot};

use smsl_core::dispatcher::{DispatchError, ExecutionSession, Mode, SupervisionEvent, Verdict};
use smsl_core::graph::{export_dot, EdgeId, FsmGraph, GraphError};
use smsl_core::smsl::{serialize, validate};
use smsl_core::Timestamp;

use crate::error::ApiError;
use crate::runtime::{Ack, Command, Runner, Sequenced, Shared};
use crate::view::{AwaitingView, FullView, PartialView, PlanView, SessionSummary, ViewEdge};
use crate::AppState;

type AppResult<T> = Result<T, ApiError>;

const DEFAULT_ACTOR: &str = "supervisor";

pub(crate) fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/branches", get(branches))
        .route("/inspect/{branch}", get(inspect))
        .route("/inspect/{branch}/plan", get(plan))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/propose", post(propose))
        .route("/sessions/{id}/decide", post(decide))
        .route("/sessions/{id}/risky", post(risky))
        .route("/sessions/{id}/flags", post(flags))
        .route("/sessions/{id}/goal", post(goal))
        .route("/sessions/{id}/confirm", post(confirm))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// JSON body extractor whose rejections use the service's error shape.
struct Body<T>(T);

impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(value) = Json::<T>::from_request(req, state)
            .await
            .map_err(|e: JsonRejection| ApiError::BadRequest(e.body_text()))?;
        Ok(Body(value))
    }
}

/// An edge as `{"src": .., "op": ..}` or `"src:op"`.
#[derive(Deserialize)]
#[serde(untagged)]
enum EdgeRef {
    Id(EdgeId),
    Text(String),
}

impl EdgeRef {
    fn resolve(self) -> AppResult<EdgeId> {
        match self {
            EdgeRef::Id(id) => Ok(id),
            EdgeRef::Text(s) => s.parse().map_err(|_| ApiError::BadRequest(format!("bad edge {s:?}, expected src:op"))),
        }
    }
}

async fn branches(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.doc.branch_names().map(str::to_string).collect())
}

async fn inspect(State(state): State<Arc<AppState>>, Path(branch): Path<String>) -> AppResult<Json<FullView>> {
    let b = state.branch(&branch)?;
    let graph = FsmGraph::build(b);
    Ok(Json(FullView {
        branch,
        document: serialize(&state.doc),
        dot: export_dot(&graph),
        graph,
        validation: validate(&state.doc),
    }))
}

#[derive(Deserialize)]
struct PlanQuery {
    from: Option<String>,
    to: String,
    /// Plan over this session's graph, including its risky marks, starting
    /// from its current state unless `from` is given.
    session: Option<String>,
}

async fn plan(
    State(state): State<Arc<AppState>>,
    Path(branch): Path<String>,
    Query(q): Query<PlanQuery>,
) -> AppResult<Json<PlanView>> {
    let b = state.branch(&branch)?;
    let (graph, current) = match &q.session {
        Some(id) => {
            let handle = state.session(id)?;
            if handle.shared.branch != branch {
                return Err(ApiError::BadRequest(format!("session {id} runs branch {}", handle.shared.branch)));
            }
            let snap = handle.shared.snapshot.read();
            (snap.graph.clone(), Some(snap.current.clone()))
        }
        None => (FsmGraph::build(b), None),
    };
    let from = q
        .from
        .or(current)
        .or_else(|| b.effective_initial().map(str::to_string))
        .ok_or_else(|| ApiError::BadRequest("no start state".into()))?;
    let path = graph
        .shortest_path(&from, &q.to)
        .map_err(|e| match e {
            GraphError::UnknownNode(n) => ApiError::Dispatch(DispatchError::UnknownState(n)),
            other => ApiError::BadRequest(other.to_string()),
        })?;
    Ok(Json(PlanView::new(&from, &q.to, path.as_ref())))
}

fn summary(shared: &Shared) -> SessionSummary {
    let snap = shared.snapshot.read();
    SessionSummary {
        id: shared.id.clone(),
        branch: shared.branch.clone(),
        current: snap.current.clone(),
        mode: snap.mode,
        goal: snap.goal.clone(),
        degraded: snap.degraded,
        seq: shared.seq(),
    }
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let handles: Vec<_> = state.sessions.read().values().cloned().collect();
    Json(handles.iter().map(|h| summary(&h.shared)).collect())
}

#[derive(Deserialize)]
struct CreateSession {
    branch: String,
    mode: Option<Mode>,
    initial: Option<String>,
    /// State to drive towards.
    goal: Option<String>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Body(req): Body<CreateSession>,
) -> AppResult<(StatusCode, Json<SessionSummary>)> {
    let branch = state.branch(&req.branch)?;
    let id = state.next_session_id();
    let mode = req.mode.unwrap_or(state.config.default_mode);
    let now = Timestamp::now();
    let mut session = ExecutionSession::start(&id, branch, req.initial.as_deref(), mode, now)?;
    if req.goal.is_some() {
        session.set_goal(req.goal.as_deref(), now)?;
    }
    let runner = Runner::new(session, branch, state.library(branch), state.log.clone(), Vec::new());
    let handle = state.register(runner);
    send(&handle.commands, |reply| Command::Start { reply }).await?;
    Ok((StatusCode::CREATED, Json(summary(&handle.shared))))
}

#[derive(Deserialize, Default)]
struct ViewQuery {
    #[serde(default)]
    incoming: bool,
}

async fn view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ViewQuery>,
) -> AppResult<Json<PartialView>> {
    let handle = state.session(&id)?;
    let shared = &handle.shared;
    let mut view = {
        let snap = shared.snapshot.read();
        let edges = |list: Vec<&smsl_core::graph::Edge>| list.into_iter().map(ViewEdge::from).collect::<Vec<_>>();
        PartialView {
            session: id.clone(),
            branch: shared.branch.clone(),
            current: snap.current.clone(),
            scene: snap.scene.clone(),
            out_edges: edges(snap.graph.out_edges(&snap.current).unwrap_or_default()),
            in_edges: q.incoming.then(|| edges(snap.graph.in_edges(&snap.current).unwrap_or_default())),
            pending: snap.pending.clone(),
            mode: snap.mode,
            flags: snap.flags.clone(),
            awaiting: Vec::new(),
            prediction: None,
            seq: shared.seq(),
        }
    };
    view.awaiting = state
        .hub
        .pending(&id)
        .into_iter()
        .map(|r| AwaitingView { token: r.token, proposal: r.proposal, operation: r.operation })
        .collect();
    view.prediction = state.config.predictor.predict(&view);
    Ok(Json(view))
}

async fn send(
    commands: &std::sync::mpsc::Sender<Command>,
    make: impl FnOnce(oneshot::Sender<Result<Ack, ApiError>>) -> Command,
) -> AppResult<Ack> {
    let (tx, rx) = oneshot::channel();
    commands.send(make(tx)).map_err(|_| ApiError::Internal("session thread stopped".into()))?;
    rx.await.map_err(|_| ApiError::Internal("session thread stopped".into()))?
}

#[derive(Deserialize)]
struct ProposeBody {
    edge: EdgeRef,
    actor: Option<String>,
}

async fn propose(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<ProposeBody>,
) -> AppResult<Json<Ack>> {
    let handle = state.session(&id)?;
    let edge = body.edge.resolve()?;
    let actor = body.actor.unwrap_or_else(|| DEFAULT_ACTOR.into());
    Ok(Json(send(&handle.commands, |reply| Command::Propose { edge, actor, reply }).await?))
}

#[derive(Deserialize)]
struct DecideBody {
    proposal: u64,
    verdict: String,
    actor: Option<String>,
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<DecideBody>,
) -> AppResult<Json<Ack>> {
    let handle = state.session(&id)?;
    let verdict: Verdict = body.verdict.parse().map_err(ApiError::BadRequest)?;
    let actor = body.actor.unwrap_or_else(|| DEFAULT_ACTOR.into());
    let proposal = body.proposal;
    Ok(Json(send(&handle.commands, |reply| Command::Decide { proposal, verdict, actor, reply }).await?))
}

#[derive(Deserialize)]
struct RiskyBody {
    edge: EdgeRef,
    #[serde(default = "yes")]
    on: bool,
    actor: Option<String>,
}

fn yes() -> bool {
    true
}

async fn risky(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<RiskyBody>,
) -> AppResult<Json<Ack>> {
    let handle = state.session(&id)?;
    let edge = body.edge.resolve()?;
    let actor = body.actor.unwrap_or_else(|| DEFAULT_ACTOR.into());
    let on = body.on;
    Ok(Json(send(&handle.commands, |reply| Command::Risky { edge, on, actor, reply }).await?))
}

#[derive(Deserialize)]
struct FlagBody {
    name: String,
    value: bool,
}

async fn flags(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<FlagBody>,
) -> AppResult<Json<Ack>> {
    let handle = state.session(&id)?;
    let FlagBody { name, value } = body;
    Ok(Json(send(&handle.commands, |reply| Command::Flag { name, value, reply }).await?))
}

#[derive(Deserialize)]
struct GoalBody {
    goal: Option<String>,
}

async fn goal(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<GoalBody>,
) -> AppResult<Json<Ack>> {
    let handle = state.session(&id)?;
    let goal = body.goal;
    Ok(Json(send(&handle.commands, |reply| Command::Goal { goal, reply }).await?))
}

#[derive(Deserialize)]
struct ConfirmBody {
    token: String,
    actor: Option<String>,
}

/// Confirmations bypass the session thread, which is blocked inside the
/// waiting handler.
async fn confirm(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<ConfirmBody>,
) -> AppResult<Json<AwaitingView>> {
    state.session(&id)?;
    if !state.hub.pending(&id).iter().any(|r| r.token == body.token) {
        return Err(ApiError::NoPendingConfirmation(body.token));
    }
    let actor = body.actor.unwrap_or_else(|| DEFAULT_ACTOR.into());
    let req = state.hub.confirm(&body.token, &actor).map_err(|e| ApiError::NoPendingConfirmation(e.0))?;
    Ok(Json(AwaitingView { token: req.token, proposal: req.proposal, operation: req.operation }))
}

struct Feed {
    shared: Arc<Shared>,
    backlog: VecDeque<Sequenced>,
    rx: broadcast::Receiver<Sequenced>,
    last: u64,
}

fn sse_event(seq: u64, event: &SupervisionEvent) -> Event {
    Event::default().id(seq.to_string()).event(event.body.kind()).data(event.to_line())
}

/// Server-sent events, one per recorded event, with the event's sequence
/// number as id. `Last-Event-ID` resumes after that event.
async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> AppResult<impl IntoResponse> {
    let handle = state.session(&id)?;
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(0);
    let (backlog, rx) = handle.shared.subscribe(last);
    let feed = Feed { shared: handle.shared.clone(), backlog: backlog.into(), rx, last };
    let stream = stream::unfold(feed, next_event);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn next_event(mut feed: Feed) -> Option<(Result<Event, Infallible>, Feed)> {
    loop {
        if let Some((seq, event)) = feed.backlog.pop_front() {
            if seq > feed.last {
                feed.last = seq;
                return Some((Ok(sse_event(seq, &event)), feed));
            }
            continue;
        }
        match feed.rx.recv().await {
            Ok(item) => feed.backlog.push_back(item),
            Err(broadcast::error::RecvError::Lagged(_)) => feed.backlog.extend(feed.shared.since(feed.last)),
            Err(broadcast::error::RecvError::Closed) => return None,
        }
    }
}
