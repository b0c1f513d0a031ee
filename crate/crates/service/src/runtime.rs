//! One thread per session. Every mutation of a session runs on its thread in
//! arrival order; readers see the snapshot published after each change.

use std::collections::BTreeMap;
use std::io;
use std::sync::{mpsc, Arc};
use std::thread;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use smsl_core::dispatcher::{
    BlindEnvironment, DispatchError, Environment, EventBody, EventLog, ExecutionSession, Mode, OperationLibrary,
    Proposal, SimEnvironment, SupervisionEvent, TransitionResult, Verdict, FLAG_TRANSITION_FAILED,
};
use smsl_core::graph::{EdgeId, FsmGraph};
use smsl_core::monitor::SensorMap;
use smsl_core::state::{BranchModel, SceneSnapshot};
use smsl_core::smsl::StateBranch;
use smsl_core::Timestamp;

use crate::error::ApiError;

const MAX_AUTO_STEPS: usize = 10_000;

/// Reply to a successful mutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub session: String,
    pub current: String,
    /// Number of events recorded for the session after the mutation.
    pub seq: u64,
    /// What happened when the mutation led to execution, e.g.
    /// `executed State_aaa --Op_1c--> State_caa`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    pub current: String,
    pub mode: Mode,
    pub flags: BTreeMap<String, bool>,
    pub pending: Option<Proposal>,
    pub graph: FsmGraph,
    pub scene: Option<SceneSnapshot>,
    pub goal: Option<String>,
    pub degraded: bool,
}

impl Snapshot {
    fn of(session: &ExecutionSession, scene: Option<SceneSnapshot>) -> Self {
        Snapshot {
            current: session.current().to_string(),
            mode: session.mode(),
            flags: session.flags().clone(),
            pending: session.pending().cloned(),
            graph: session.graph().clone(),
            scene,
            goal: session.goal().map(str::to_string),
            degraded: session.is_degraded(),
        }
    }
}

/// An event with its 1-based position in the session feed.
pub(crate) type Sequenced = (u64, SupervisionEvent);

/// State of a session visible outside its thread.
pub(crate) struct Shared {
    pub id: String,
    pub branch: String,
    pub snapshot: RwLock<Snapshot>,
    feed: Mutex<Vec<SupervisionEvent>>,
    stream: broadcast::Sender<Sequenced>,
    log: Arc<Mutex<EventLog>>,
}

impl Shared {
    /// Appends to the event log, then to the session feed and stream.
    pub fn publish(&self, event: SupervisionEvent) -> io::Result<u64> {
        let mut feed = self.feed.lock();
        self.log.lock().append(&event)?;
        feed.push(event.clone());
        let seq = feed.len() as u64;
        let _ = self.stream.send((seq, event));
        Ok(seq)
    }

    /// Publishes an event that does not pass through the session itself.
    pub fn publish_now(&self, body: EventBody) -> io::Result<u64> {
        let last = self.feed.lock().last().map_or(Timestamp::ZERO, |e| e.ts);
        self.publish(SupervisionEvent { ts: Timestamp::now().max(last), session: self.id.clone(), body })
    }

    pub fn seq(&self) -> u64 {
        self.feed.lock().len() as u64
    }

    /// Events after `seq` (1-based numbering) and a receiver for everything
    /// published later, taken atomically.
    pub fn subscribe(&self, seq: u64) -> (Vec<Sequenced>, broadcast::Receiver<Sequenced>) {
        let feed = self.feed.lock();
        (Self::after(&feed, seq), self.stream.subscribe())
    }

    pub fn since(&self, seq: u64) -> Vec<Sequenced> {
        Self::after(&self.feed.lock(), seq)
    }

    fn after(feed: &[SupervisionEvent], seq: u64) -> Vec<Sequenced> {
        feed.iter().enumerate().skip(seq as usize).map(|(i, e)| (i as u64 + 1, e.clone())).collect()
    }
}

pub(crate) type Reply = oneshot::Sender<Result<Ack, ApiError>>;

pub(crate) enum Command {
    Start { reply: Reply },
    Propose { edge: EdgeId, actor: String, reply: Reply },
    Decide { proposal: u64, verdict: Verdict, actor: String, reply: Reply },
    Risky { edge: EdgeId, on: bool, actor: String, reply: Reply },
    Flag { name: String, value: bool, reply: Reply },
    Goal { goal: Option<String>, reply: Reply },
}

enum Env {
    Sim(Box<SimEnvironment>),
    Blind(BlindEnvironment),
}

impl Env {
    fn for_branch(branch: &StateBranch, current: &str) -> Self {
        let model = BranchModel::new(branch);
        if let (true, Some(n)) = (model.is_decodable(), model.fact_count()) {
            let map = SensorMap::numbered("fact", n);
            if let Ok(env) = SimEnvironment::new(model, map, current) {
                return Env::Sim(Box::new(env));
            }
        }
        Env::Blind(BlindEnvironment::default())
    }

    /// Moves the environment clock up to wall-clock time.
    fn sync(&mut self) -> Timestamp {
        let wall = Timestamp::now();
        match self {
            Env::Sim(env) => {
                env.advance_to(wall);
                env.now()
            }
            Env::Blind(env) => {
                env.now = env.now.max(wall);
                env.now
            }
        }
    }

    fn as_dyn(&mut self) -> &mut dyn Environment {
        match self {
            Env::Sim(env) => env.as_mut(),
            Env::Blind(env) => env,
        }
    }
}

/// Owns an [`ExecutionSession`] and everything it acts on.
pub(crate) struct Runner {
    session: ExecutionSession,
    env: Env,
    lib: OperationLibrary,
    shared: Arc<Shared>,
    published: usize,
    scene: Option<SceneSnapshot>,
}

pub(crate) struct Spawned {
    pub shared: Arc<Shared>,
    pub commands: mpsc::Sender<Command>,
}

impl Runner {
    /// Wraps a session. `feed` holds the events already in the log for it;
    /// they are not written again.
    pub fn new(
        session: ExecutionSession,
        branch: &StateBranch,
        lib: OperationLibrary,
        log: Arc<Mutex<EventLog>>,
        feed: Vec<SupervisionEvent>,
    ) -> Self {
        let mut env = Env::for_branch(branch, session.current());
        env.sync();
        let scene = match &mut env {
            Env::Sim(sim) => sim.observe().ok().map(|e| e.scene),
            Env::Blind(_) => None,
        };
        let published = if feed.is_empty() { 0 } else { session.history().len() };
        let (stream, _) = broadcast::channel(1024);
        let shared = Arc::new(Shared {
            id: session.id().to_string(),
            branch: session.branch().to_string(),
            snapshot: RwLock::new(Snapshot::of(&session, scene.clone())),
            feed: Mutex::new(feed),
            stream,
            log,
        });
        Runner { session, env, lib, shared, published, scene }
    }

    pub fn spawn(self) -> Spawned {
        let (tx, rx) = mpsc::channel();
        let shared = self.shared.clone();
        thread::Builder::new()
            .name(format!("session-{}", shared.id))
            .spawn(move || self.run(rx))
            .expect("spawn session thread");
        Spawned { shared, commands: tx }
    }

    fn run(mut self, commands: mpsc::Receiver<Command>) {
        while let Ok(command) = commands.recv() {
            let (reply, result) = self.handle(command);
            let flushed = self.flush();
            let result = result.and_then(|outcomes| {
                flushed?;
                Ok(Ack {
                    session: self.session.id().to_string(),
                    current: self.session.current().to_string(),
                    seq: self.shared.seq(),
                    outcomes,
                })
            });
            let _ = reply.send(result);
        }
    }

    fn handle(&mut self, command: Command) -> (Reply, Result<Vec<String>, ApiError>) {
        match command {
            Command::Start { reply } => (reply, self.advance()),
            Command::Propose { edge, actor, reply } => (reply, self.propose(&edge, &actor)),
            Command::Decide { proposal, verdict, actor, reply } => (reply, self.decide(proposal, verdict, &actor)),
            Command::Risky { edge, on, actor, reply } => {
                let now = self.env.sync();
                let result = self.session.mark_risky(&edge, on, &actor, now).map_err(ApiError::from);
                (reply, result.and_then(|_| self.advance()))
            }
            Command::Flag { name, value, reply } => {
                let now = self.env.sync();
                let result = self.session.set_flag(&name, value, now).map_err(ApiError::from);
                (reply, result.and_then(|_| self.advance()))
            }
            Command::Goal { goal, reply } => {
                let now = self.env.sync();
                let result = self.session.set_goal(goal.as_deref(), now).map_err(ApiError::from);
                (reply, result.and_then(|_| self.advance()))
            }
        }
    }

    /// In manual mode the proposer is the operator, so the proposal is
    /// approved in their name and executed at once.
    fn propose(&mut self, edge: &EdgeId, actor: &str) -> Result<Vec<String>, ApiError> {
        let now = self.env.sync();
        let proposal = self.session.propose(edge, now)?;
        if self.session.mode() == Mode::Manual {
            self.session.decide(proposal.id, Verdict::Approved, actor, now)?;
        }
        let mut outcomes = Vec::new();
        if self.session.pending().is_some_and(|p| p.decided == Some(Verdict::Approved)) {
            outcomes.push(self.execute()?.0);
            outcomes.extend(self.advance()?);
        }
        Ok(outcomes)
    }

    fn decide(&mut self, proposal: u64, verdict: Verdict, actor: &str) -> Result<Vec<String>, ApiError> {
        let now = self.env.sync();
        self.session.decide(proposal, verdict, actor, now)?;
        let mut outcomes = Vec::new();
        if verdict == Verdict::Approved {
            outcomes.push(self.execute()?.0);
        }
        outcomes.extend(self.advance()?);
        Ok(outcomes)
    }

    /// Steps the approved proposal. Returns a description and whether the
    /// transition was executed.
    fn execute(&mut self) -> Result<(String, bool), ApiError> {
        self.flush()?;
        self.env.sync();
        let result = self.session.step(&self.lib, self.env.as_dyn());
        let outcome = match result {
            Ok(TransitionResult::Executed { edge, from, to, estimate }) => {
                if let Some(e) = estimate {
                    self.scene = Some(e.scene);
                }
                (format!("executed {from} --{}--> {to}", edge.op), true)
            }
            Ok(TransitionResult::Failed { edge, reason, estimate, .. }) => {
                if let Some(e) = estimate {
                    self.scene = Some(e.scene);
                }
                (format!("failed {edge}: {reason}"), false)
            }
            Err(DispatchError::NotApproved) => return Err(DispatchError::NotApproved.into()),
            Err(e) => (format!("not executed: {e}"), false),
        };
        self.flush()?;
        Ok(outcome)
    }

    /// Drives the session towards its goal while nothing needs a person.
    fn advance(&mut self) -> Result<Vec<String>, ApiError> {
        let mut outcomes = Vec::new();
        for _ in 0..MAX_AUTO_STEPS {
            let Some(goal) = self.session.goal().map(str::to_string) else { break };
            if self.session.current() == goal
                || self.session.pending().is_some()
                || self.session.mode() == Mode::Manual
                || self.session.flag(FLAG_TRANSITION_FAILED)
            {
                break;
            }
            let Ok(Some(plan)) = self.session.plan_to(&goal) else { break };
            let Some(hop) = plan.hops.first() else { break };
            let now = self.env.sync();
            let proposal = match self.session.propose(&hop.edge, now) {
                Ok(p) => p,
                Err(_) => break,
            };
            if proposal.decided != Some(Verdict::Approved) {
                break;
            }
            let (outcome, executed) = self.execute()?;
            outcomes.push(outcome);
            if !executed {
                break;
            }
        }
        Ok(outcomes)
    }

    /// Publishes events committed since the last flush and refreshes the
    /// snapshot.
    fn flush(&mut self) -> Result<(), ApiError> {
        let history = self.session.history();
        for event in &history[self.published..] {
            self.shared.publish(event.clone()).map_err(|e| ApiError::Internal(format!("event log: {e}")))?;
        }
        self.published = history.len();
        *self.shared.snapshot.write() = Snapshot::of(&self.session, self.scene.clone());
        Ok(())
    }
}
