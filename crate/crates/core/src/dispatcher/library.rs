use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use thiserror::Error;

use super::DispatchError;
use crate::graph::Edge;
use crate::monitor::World;
use crate::smsl::StateBranch;
use crate::state::{FactConfig, SceneSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandlerError {
    #[error("operation failed: {0}")]
    Failed(String),
    #[error("timed out waiting for confirmation {0:?}")]
    ConfirmationTimeout(String),
}

/// What a handler gets to work with for one transition.
pub struct HandlerContext<'a> {
    pub session: &'a str,
    pub proposal: u64,
    pub edge: &'a Edge,
    /// Scene observed just before execution; `None` for branches without
    /// sensing.
    pub scene: Option<&'a SceneSnapshot>,
    /// Fact configuration of the edge target, when the branch encodes one.
    pub target: Option<&'a FactConfig>,
    pub world: Option<&'a mut World>,
}

/// Executable implementation of an operation. Handlers must run to
/// completion; the dispatcher verifies the outcome through the monitor.
pub trait Handler: Send + Sync {
    fn execute(&self, ctx: &mut HandlerContext<'_>) -> Result<(), HandlerError>;
}

impl<F> Handler for F
where
    F: Fn(&mut HandlerContext<'_>) -> Result<(), HandlerError> + Send + Sync,
{
    fn execute(&self, ctx: &mut HandlerContext<'_>) -> Result<(), HandlerError> {
        self(ctx)
    }
}

/// Forces the simulated world into the edge target's configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleHandler;

impl Handler for OracleHandler {
    fn execute(&self, ctx: &mut HandlerContext<'_>) -> Result<(), HandlerError> {
        if let (Some(world), Some(target)) = (ctx.world.as_deref_mut(), ctx.target) {
            world.set(target);
        }
        Ok(())
    }
}

/// Reports success without touching the world.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopHandler;

impl Handler for NoopHandler {
    fn execute(&self, _: &mut HandlerContext<'_>) -> Result<(), HandlerError> {
        Ok(())
    }
}

/// Registry of operation handlers by operation name.
#[derive(Clone, Default)]
pub struct OperationLibrary {
    entries: BTreeMap<String, Arc<dyn Handler>>,
}

impl fmt::Debug for OperationLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

impl OperationLibrary {
    pub fn new() -> Self {
        OperationLibrary::default()
    }

    /// A library with an [`OracleHandler`] for every operation name used in
    /// `branch`.
    pub fn oracle_for(branch: &StateBranch) -> Self {
        let mut lib = OperationLibrary::new();
        for ops in branch.states().values() {
            for op in ops.keys() {
                lib.entries.entry(op.clone()).or_insert_with(|| Arc::new(OracleHandler));
            }
        }
        lib
    }

    pub fn register(&mut self, name: impl Into<String>, handler: impl Handler + 'static) -> Result<(), DispatchError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(DispatchError::DuplicateName(name));
        }
        self.entries.insert(name, Arc::new(handler));
        Ok(())
    }

    /// Registers or overwrites.
    pub fn replace(&mut self, name: impl Into<String>, handler: Arc<dyn Handler>) -> Option<Arc<dyn Handler>> {
        self.entries.insert(name.into(), handler)
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Handler>> {
        self.entries.get(name).cloned()
    }

    pub fn remove(&mut self, name: &str) -> Option<Arc<dyn Handler>> {
        self.entries.remove(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no handler is waiting for confirmation {0:?}")]
pub struct NoPendingConfirmation(pub String);

/// A confirmation a human-in-the-loop handler is blocked on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfirmationRequest {
    pub session: String,
    pub proposal: u64,
    pub operation: String,
    pub token: String,
}

type Observer = Box<dyn Fn(&ConfirmationRequest) + Send + Sync>;
type ConfirmObserver = Box<dyn Fn(&ConfirmationRequest, &str) + Send + Sync>;

/// Rendezvous between handlers waiting for a human and the people
/// confirming. Each token accepts exactly one confirmation.
#[derive(Default)]
pub struct ConfirmationHub {
    waiting: Mutex<HashMap<String, (ConfirmationRequest, mpsc::Sender<String>)>>,
    observer: Mutex<Option<Observer>>,
    confirmed: Mutex<Option<ConfirmObserver>>,
}

impl fmt::Debug for ConfirmationHub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConfirmationHub").field("waiting", &self.waiting.lock().len()).finish()
    }
}

impl ConfirmationHub {
    pub fn new() -> Arc<Self> {
        Arc::new(ConfirmationHub::default())
    }

    /// Called whenever a handler starts waiting.
    pub fn on_request(&self, observer: impl Fn(&ConfirmationRequest) + Send + Sync + 'static) {
        *self.observer.lock() = Some(Box::new(observer));
    }

    /// Called with the request and the actor when a confirmation is accepted,
    /// before the waiting handler resumes.
    pub fn on_confirm(&self, observer: impl Fn(&ConfirmationRequest, &str) + Send + Sync + 'static) {
        *self.confirmed.lock() = Some(Box::new(observer));
    }

    fn register(&self, request: ConfirmationRequest) -> mpsc::Receiver<String> {
        let (tx, rx) = mpsc::channel();
        self.waiting.lock().insert(request.token.clone(), (request.clone(), tx));
        if let Some(observe) = self.observer.lock().as_ref() {
            observe(&request);
        }
        rx
    }

    fn cancel(&self, token: &str) {
        self.waiting.lock().remove(token);
    }

    /// Releases the handler waiting on `token`.
    pub fn confirm(&self, token: &str, actor: &str) -> Result<ConfirmationRequest, NoPendingConfirmation> {
        let (request, tx) = self
            .waiting
            .lock()
            .remove(token)
            .ok_or_else(|| NoPendingConfirmation(token.to_string()))?;
        if let Some(observe) = self.confirmed.lock().as_ref() {
            observe(&request, actor);
        }
        tx.send(actor.to_string()).map_err(|_| NoPendingConfirmation(token.to_string()))?;
        Ok(request)
    }

    /// Requests currently waiting for `session`.
    pub fn pending(&self, session: &str) -> Vec<ConfirmationRequest> {
        let mut out: Vec<_> =
            self.waiting.lock().values().filter(|(r, _)| r.session == session).map(|(r, _)| r.clone()).collect();
        out.sort_by(|a, b| a.token.cmp(&b.token));
        out
    }
}

/// Blocks until a person confirms, then runs `inner`. Models operations a
/// human performs or verifies, e.g. waiting for visual confirmation.
pub struct ConfirmationHandler {
    hub: Arc<ConfirmationHub>,
    inner: Arc<dyn Handler>,
    timeout: Duration,
}

impl ConfirmationHandler {
    pub fn new(hub: Arc<ConfirmationHub>, inner: Arc<dyn Handler>, timeout: Duration) -> Self {
        ConfirmationHandler { hub, inner, timeout }
    }

    pub fn token(session: &str, proposal: u64) -> String {
        format!("{session}-p{proposal}")
    }
}

impl Handler for ConfirmationHandler {
    fn execute(&self, ctx: &mut HandlerContext<'_>) -> Result<(), HandlerError> {
        let token = ConfirmationHandler::token(ctx.session, ctx.proposal);
        let rx = self.hub.register(ConfirmationRequest {
            session: ctx.session.to_string(),
            proposal: ctx.proposal,
            operation: ctx.edge.op().to_string(),
            token: token.clone(),
        });
        match rx.recv_timeout(self.timeout) {
            Ok(_actor) => self.inner.execute(ctx),
            Err(_) => {
                self.hub.cancel(&token);
                Err(HandlerError::ConfirmationTimeout(token))
            }
        }
    }
}
