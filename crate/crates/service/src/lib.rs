//! HTTP service for inspecting SMSL documents and supervising running
//! sessions.
//!
//! Inspectors get the full view of a branch: the document, its graph, the
//! validation report and DOT text. Supervisors get a partial view of a
//! session: the current state, the operations leaving it and the pending
//! proposal, and can approve or veto proposals, mark edges risky, set flags
//! and answer confirmation requests. Every change is appended to a
//! line-delimited event log before the request is answered; on start the
//! log is replayed so sessions survive restarts.
//!
//! ```no_run
//! use smsl_service::{load_document, Service, ServiceConfig};
//!
//! # async fn run() -> Result<(), smsl_service::ServiceError> {
//! let doc = load_document("registration.smsl")?;
//! let service = Service::new(doc, ServiceConfig::new("events.jsonl"))?;
//! let listener = smsl_service::bind("127.0.0.1:8080".parse().unwrap()).await?;
//! service.serve(listener).await
//! # }
//! ```

mod api;
mod error;
mod runtime;
mod view;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/supervision.md")]
mod book {}

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use tokio::net::TcpListener;

use smsl_core::dispatcher::{
    ConfirmationHandler, ConfirmationHub, EventBody, EventLog, ExecutionSession, Mode, OperationLibrary,
    SupervisionEvent,
};
use smsl_core::graph::FsmGraph;
use smsl_core::smsl::{parse, validate, SmslDocument, StateBranch};

pub use error::{ApiError, ServiceError};
pub use runtime::Ack;
pub use view::{
    AwaitingView, FullView, NoPrediction, PartialView, PlanHop, PlanView, Predictor, SessionSummary, ViewEdge,
};

use runtime::{Command, Runner, Shared};

pub struct ServiceConfig {
    pub log_path: PathBuf,
    /// Mode for sessions created without one.
    pub default_mode: Mode,
    /// Operations whose handlers wait for a person to confirm.
    pub confirm_operations: BTreeSet<String>,
    pub confirm_timeout: Duration,
    pub predictor: Arc<dyn Predictor>,
}

impl ServiceConfig {
    pub fn new(log_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            log_path: log_path.into(),
            default_mode: Mode::Supervised,
            confirm_operations: BTreeSet::new(),
            confirm_timeout: Duration::from_secs(600),
            predictor: Arc::new(NoPrediction),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.default_mode = mode;
        self
    }

    pub fn confirm(mut self, operation: impl Into<String>) -> Self {
        self.confirm_operations.insert(operation.into());
        self
    }

    pub fn with_confirm_timeout(mut self, timeout: Duration) -> Self {
        self.confirm_timeout = timeout;
        self
    }

    pub fn with_predictor(mut self, predictor: Arc<dyn Predictor>) -> Self {
        self.predictor = predictor;
        self
    }
}

/// Reads and parses an SMSL file.
pub fn load_document(path: impl AsRef<Path>) -> Result<SmslDocument, ServiceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::InvalidDocument(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| ServiceError::InvalidDocument(format!("{}: {e}", path.display())))
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::BindFailure { addr, source })
}

pub(crate) struct SessionHandle {
    pub shared: Arc<Shared>,
    pub commands: mpsc::Sender<Command>,
}

type Registry = Arc<RwLock<BTreeMap<String, Arc<SessionHandle>>>>;

pub(crate) struct AppState {
    pub doc: SmslDocument,
    pub config: ServiceConfig,
    pub hub: Arc<ConfirmationHub>,
    pub log: Arc<Mutex<EventLog>>,
    pub sessions: Registry,
    next_id: AtomicU64,
}

impl AppState {
    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    pub fn branch(&self, name: &str) -> Result<&StateBranch, ApiError> {
        self.doc.branch(name).ok_or_else(|| ApiError::UnknownBranch(name.to_string()))
    }

    pub fn library(&self, branch: &StateBranch) -> OperationLibrary {
        let mut lib = OperationLibrary::oracle_for(branch);
        for op in &self.config.confirm_operations {
            if let Some(inner) = lib.get(op) {
                let handler = ConfirmationHandler::new(self.hub.clone(), inner, self.config.confirm_timeout);
                lib.replace(op.clone(), Arc::new(handler));
            }
        }
        lib
    }

    pub fn next_session_id(&self) -> String {
        format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst))
    }

    pub fn register(&self, runner: Runner) -> Arc<SessionHandle> {
        let spawned = runner.spawn();
        let handle = Arc::new(SessionHandle { shared: spawned.shared, commands: spawned.commands });
        self.sessions.write().insert(handle.shared.id.clone(), handle.clone());
        handle
    }
}

/// A loaded document, its sessions and the event log.
#[derive(Clone)]
pub struct Service {
    state: Arc<AppState>,
}

impl Service {
    /// Checks the document, opens the event log and restores the sessions
    /// recorded in it.
    pub fn new(doc: SmslDocument, config: ServiceConfig) -> Result<Self, ServiceError> {
        let report = validate(&doc);
        let errors: Vec<String> = report.errors().map(ToString::to_string).collect();
        if !errors.is_empty() {
            return Err(ServiceError::InvalidDocument(errors.join("; ")));
        }
        let recorded = EventLog::read_all(&config.log_path)?;
        let log = Arc::new(Mutex::new(EventLog::open(&config.log_path)?));
        let sessions: Registry = Arc::default();
        let hub = ConfirmationHub::new();
        {
            let sessions = sessions.clone();
            hub.on_request(move |req| {
                if let Some(h) = sessions.read().get(&req.session) {
                    let body = EventBody::AwaitingConfirmation { proposal: req.proposal, token: req.token.clone() };
                    let _ = h.shared.publish_now(body);
                }
            });
        }
        {
            let sessions = sessions.clone();
            hub.on_confirm(move |req, actor| {
                if let Some(h) = sessions.read().get(&req.session) {
                    let body = EventBody::Confirmed { token: req.token.clone(), actor: actor.to_string() };
                    let _ = h.shared.publish_now(body);
                }
            });
        }
        let state = Arc::new(AppState { doc, config, hub, log, sessions, next_id: AtomicU64::new(1) });
        restore(&state, recorded)?;
        Ok(Service { state })
    }

    pub fn router(&self) -> axum::Router {
        api::router(self.state.clone())
    }

    /// Serves the API until the listener fails.
    pub async fn serve(self, listener: TcpListener) -> Result<(), ServiceError> {
        axum::serve(listener, self.router()).await.map_err(ServiceError::Server)
    }
}

fn restore(state: &AppState, recorded: Vec<SupervisionEvent>) -> Result<(), ServiceError> {
    let mut by_session: BTreeMap<String, Vec<SupervisionEvent>> = BTreeMap::new();
    let mut order = Vec::new();
    for event in recorded {
        if !by_session.contains_key(&event.session) {
            order.push(event.session.clone());
        }
        by_session.entry(event.session.clone()).or_default().push(event);
    }
    let mut max_id = 0;
    for id in order {
        let events = by_session.remove(&id).unwrap_or_default();
        let fail = |message: String| ServiceError::Restore { session: id.clone(), message };
        let Some(EventBody::Started { branch, .. }) = events.first().map(|e| &e.body) else {
            return Err(fail("history does not start with Started".into()));
        };
        let branch = state.doc.branch(branch).ok_or_else(|| fail(format!("no branch {branch:?}")))?;
        let session = ExecutionSession::replay(FsmGraph::build(branch), &events).map_err(|e| fail(e.to_string()))?;
        if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
            max_id = max_id.max(n);
        }
        let runner = Runner::new(session, branch, state.library(branch), state.log.clone(), events);
        state.register(runner);
    }
    state.next_id.store(max_id + 1, Ordering::SeqCst);
    Ok(())
}
