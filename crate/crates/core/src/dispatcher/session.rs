use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    DispatchError, Environment, EventBody, HandlerContext, Mode, OperationLibrary, Proposal, SupervisionEvent,
    Verdict, AUTONOMOUS_ACTOR, FLAG_TAKEOVER, FLAG_TRANSITION_FAILED,
};
use crate::graph::{EdgeId, FsmGraph, Hop, Path};
use crate::monitor::{detect_unplanned_transition, Alarm, StateEstimate};
use crate::smsl::StateBranch;
use crate::state::BranchModel;
use crate::Timestamp;

/// A live run over one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionSession {
    id: String,
    branch: String,
    graph: FsmGraph,
    current: String,
    mode: Mode,
    flags: BTreeMap<String, bool>,
    pending: Option<Proposal>,
    history: Vec<SupervisionEvent>,
    degraded: bool,
    next_proposal: u64,
    resume_mode: Option<Mode>,
    goal: Option<String>,
}

/// Outcome of one [`ExecutionSession::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionResult {
    Executed {
        edge: EdgeId,
        from: String,
        to: String,
        /// Post-execution estimate, absent for branches without sensing.
        estimate: Option<StateEstimate>,
    },
    Failed {
        edge: EdgeId,
        expected: String,
        observed: Option<String>,
        alarm: Option<Alarm>,
        reason: String,
        estimate: Option<StateEstimate>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Completed,
    Vetoed,
    Alarm,
    Failed,
    FlagBlocked,
    Manual,
    PreCheckFailed,
    MissingOperation(String),
    EdgePruned(EdgeId),
    Error(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::MissingOperation(op) => write!(f, "MissingOperation({op})"),
            StopReason::EdgePruned(e) => write!(f, "EdgePruned({e})"),
            StopReason::Error(m) => write!(f, "Error({m})"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub executed: Vec<Hop>,
    pub final_state: String,
    pub stop: StopReason,
    pub alarms: Vec<Alarm>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.executed {
            writeln!(f, "executed {} --{}--> {}", h.edge.src, h.edge.op, h.target)?;
        }
        for a in &self.alarms {
            writeln!(
                f,
                "alarm {:?}: {} -> {} at {}",
                a.kind,
                a.from.as_deref().unwrap_or("unknown"),
                a.to.as_deref().unwrap_or("unknown"),
                a.at
            )?;
        }
        writeln!(f, "final state: {}", self.final_state)?;
        write!(f, "stop reason: {}", self.stop)
    }
}

/// A supervisor's answer to a proposal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub verdict: Verdict,
    pub actor: String,
}

/// Decides proposals during [`ExecutionSession::run_plan`] in supervised
/// mode.
pub trait Supervisor {
    fn review(&mut self, session: &ExecutionSession, proposal: &Proposal) -> Decision;
}

impl<F> Supervisor for F
where
    F: FnMut(&ExecutionSession, &Proposal) -> Decision,
{
    fn review(&mut self, session: &ExecutionSession, proposal: &Proposal) -> Decision {
        self(session, proposal)
    }
}

/// Approves everything under the given actor name.
#[derive(Debug, Clone)]
pub struct AutoApprove(pub String);

impl Supervisor for AutoApprove {
    fn review(&mut self, _: &ExecutionSession, _: &Proposal) -> Decision {
        Decision { verdict: Verdict::Approved, actor: self.0.clone() }
    }
}

impl ExecutionSession {
    /// Starts a session on `branch` at `initial` (default: the branch's
    /// effective initial state).
    pub fn start(
        id: impl Into<String>,
        branch: &StateBranch,
        initial: Option<&str>,
        mode: Mode,
        now: Timestamp,
    ) -> Result<Self, DispatchError> {
        let initial = initial
            .or_else(|| branch.effective_initial())
            .ok_or_else(|| DispatchError::UnknownState(String::new()))?;
        let degraded = !BranchModel::new(branch).is_decodable();
        ExecutionSession::with_graph(id, FsmGraph::build(branch), initial, mode, degraded, now)
    }

    /// Starts a session over an explicit graph. `degraded` sessions skip the
    /// pre- and post-checks and take transitions on trust.
    pub fn with_graph(
        id: impl Into<String>,
        graph: FsmGraph,
        initial: &str,
        mode: Mode,
        degraded: bool,
        now: Timestamp,
    ) -> Result<Self, DispatchError> {
        if !graph.contains_node(initial) {
            return Err(DispatchError::UnknownState(initial.to_string()));
        }
        let mut session = ExecutionSession::blank(id.into(), graph, initial, mode, degraded);
        let body = EventBody::Started {
            branch: session.branch.clone(),
            initial: initial.to_string(),
            mode,
            degraded,
        };
        session.history.push(SupervisionEvent { ts: now, session: session.id.clone(), body });
        Ok(session)
    }

    fn blank(id: String, graph: FsmGraph, initial: &str, mode: Mode, degraded: bool) -> Self {
        ExecutionSession {
            id,
            branch: graph.branch().to_string(),
            graph,
            current: initial.to_string(),
            mode,
            flags: BTreeMap::new(),
            pending: None,
            history: Vec::new(),
            degraded,
            next_proposal: 1,
            resume_mode: None,
            goal: None,
        }
    }

    /// Rebuilds a session from its recorded history. `graph` must be the
    /// unmodified graph the session started from.
    pub fn replay(graph: FsmGraph, events: &[SupervisionEvent]) -> Result<Self, DispatchError> {
        let (first, rest) = events.split_first().ok_or_else(|| DispatchError::Replay("empty history".into()))?;
        let EventBody::Started { branch, initial, mode, degraded } = &first.body else {
            return Err(DispatchError::Replay(format!("history starts with {}", first.body.kind())));
        };
        if branch != graph.branch() {
            return Err(DispatchError::Replay(format!("history is for branch {branch:?}")));
        }
        if !graph.contains_node(initial) {
            return Err(DispatchError::UnknownState(initial.clone()));
        }
        let mut session = ExecutionSession::blank(first.session.clone(), graph, initial, *mode, *degraded);
        session.history.push(first.clone());
        for event in rest {
            if event.session != session.id {
                return Err(DispatchError::Replay(format!("event for session {:?}", event.session)));
            }
            if matches!(event.body, EventBody::AwaitingConfirmation { .. } | EventBody::Confirmed { .. }) {
                continue;
            }
            session.apply(event.ts, &event.body)?;
            session.history.push(event.clone());
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn branch(&self) -> &str {
        &self.branch
    }

    pub fn graph(&self) -> &FsmGraph {
        &self.graph
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn flags(&self) -> &BTreeMap<String, bool> {
        &self.flags
    }

    pub fn flag(&self, name: &str) -> bool {
        self.flags.get(name).copied().unwrap_or(false)
    }

    /// Target state recorded with [`set_goal`](Self::set_goal).
    pub fn goal(&self) -> Option<&str> {
        self.goal.as_deref()
    }

    pub fn pending(&self) -> Option<&Proposal> {
        self.pending.as_ref()
    }

    pub fn history(&self) -> &[SupervisionEvent] {
        &self.history
    }

    /// True when the branch cannot be observed and transitions are taken on
    /// trust.
    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    fn last_ts(&self) -> Timestamp {
        self.history.last().map_or(Timestamp::ZERO, |e| e.ts)
    }

    /// Applies and records one event. Timestamps never go backwards.
    fn commit(&mut self, now: Timestamp, body: EventBody) -> Result<(), DispatchError> {
        let ts = now.max(self.last_ts());
        self.apply(ts, &body)?;
        self.history.push(SupervisionEvent { ts, session: self.id.clone(), body });
        Ok(())
    }

    fn apply(&mut self, ts: Timestamp, body: &EventBody) -> Result<(), DispatchError> {
        match body {
            EventBody::Started { .. } => return Err(DispatchError::Replay("duplicate Started event".into())),
            EventBody::Proposed { proposal, edge } => {
                let e = self.graph.edge(edge).ok_or_else(|| DispatchError::UnknownEdge(edge.clone()))?;
                if e.src() != self.current {
                    return Err(DispatchError::WrongSource { edge: edge.clone(), current: self.current.clone() });
                }
                self.pending = Some(Proposal {
                    id: *proposal,
                    edge: edge.clone(),
                    proposed_at: ts,
                    decided: None,
                    decided_by: None,
                });
                self.next_proposal = proposal + 1;
            }
            EventBody::Approved { proposal, actor } | EventBody::Vetoed { proposal, actor } => {
                let p = self.pending_mut(*proposal)?;
                let verdict = if matches!(body, EventBody::Approved { .. }) { Verdict::Approved } else { Verdict::Vetoed };
                p.decided = Some(verdict);
                p.decided_by = Some(actor.clone());
                if verdict == Verdict::Vetoed {
                    self.pending = None;
                }
            }
            EventBody::Executed { proposal, edge, from, to } => {
                self.pending_mut(*proposal)?;
                let e = self.graph.edge(edge).ok_or_else(|| DispatchError::UnknownEdge(edge.clone()))?;
                if e.src() != self.current || *from != self.current || e.dst != *to {
                    return Err(DispatchError::Replay(format!("Executed {edge} does not match the graph")));
                }
                self.current = to.clone();
                self.pending = None;
            }
            EventBody::FailedTransition { proposal, observed, .. } => {
                self.pending_mut(*proposal)?;
                if let Some(state) = observed {
                    if !self.graph.contains_node(state) {
                        return Err(DispatchError::UnknownState(state.clone()));
                    }
                    self.current = state.clone();
                }
                self.pending = None;
            }
            EventBody::Aborted { proposal, .. } => {
                self.pending_mut(*proposal)?;
                self.pending = None;
            }
            EventBody::Alarm { .. } | EventBody::AwaitingConfirmation { .. } | EventBody::Confirmed { .. } => {}
            EventBody::FlagSet { name, value } => {
                if name == FLAG_TAKEOVER && *value && self.mode != Mode::Manual {
                    self.resume_mode = Some(self.mode);
                }
                self.flags.insert(name.clone(), *value);
            }
            EventBody::ModeChanged { to, .. } => {
                self.mode = *to;
                if *to != Mode::Manual {
                    self.resume_mode = None;
                }
            }
            EventBody::GoalSet { goal } => {
                if let Some(g) = goal {
                    if !self.graph.contains_node(g) {
                        return Err(DispatchError::UnknownState(g.clone()));
                    }
                }
                self.goal = goal.clone();
            }
            EventBody::RiskyMarked { edge, on, .. } => {
                self.graph.mark_risky(edge, *on).map_err(|_| DispatchError::UnknownEdge(edge.clone()))?;
            }
        }
        Ok(())
    }

    fn pending_mut(&mut self, id: u64) -> Result<&mut Proposal, DispatchError> {
        match &mut self.pending {
            Some(p) if p.id == id => Ok(p),
            _ if id > 0 && id < self.next_proposal => Err(DispatchError::AlreadyDecided(id)),
            _ => Err(DispatchError::UnknownProposal(id)),
        }
    }

    /// Proposes taking `edge` from the current state. In autonomous mode the
    /// proposal is approved immediately.
    pub fn propose(&mut self, edge: &EdgeId, now: Timestamp) -> Result<Proposal, DispatchError> {
        if let Some(p) = &self.pending {
            return Err(DispatchError::ProposalPending(p.id));
        }
        let e = self.graph.edge(edge).ok_or_else(|| DispatchError::UnknownEdge(edge.clone()))?;
        if e.src() != self.current {
            return Err(DispatchError::WrongSource { edge: edge.clone(), current: self.current.clone() });
        }
        if e.pruned {
            return Err(DispatchError::EdgePruned(edge.clone()));
        }
        let id = self.next_proposal;
        self.commit(now, EventBody::Proposed { proposal: id, edge: edge.clone() })?;
        if self.mode == Mode::Autonomous {
            self.commit(now, EventBody::Approved { proposal: id, actor: AUTONOMOUS_ACTOR.into() })?;
        }
        Ok(self.pending.clone().expect("just proposed"))
    }

    /// Records a supervisor's verdict. A veto clears the proposal.
    pub fn decide(&mut self, proposal: u64, verdict: Verdict, actor: &str, now: Timestamp) -> Result<(), DispatchError> {
        let p = self.pending_mut(proposal)?;
        if p.decided.is_some() {
            return Err(DispatchError::AlreadyDecided(proposal));
        }
        self.commit(now, EventBody::verdict(verdict, proposal, actor.to_string()))
    }

    pub fn set_flag(&mut self, name: &str, value: bool, now: Timestamp) -> Result<(), DispatchError> {
        let previous = self.mode;
        self.commit(now, EventBody::FlagSet { name: name.to_string(), value })?;
        if name == FLAG_TAKEOVER {
            if value && previous != Mode::Manual {
                self.commit(now, EventBody::ModeChanged { from: previous, to: Mode::Manual })?;
            } else if !value && previous == Mode::Manual {
                if let Some(resume) = self.resume_mode {
                    self.commit(now, EventBody::ModeChanged { from: Mode::Manual, to: resume })?;
                }
            }
        }
        Ok(())
    }

    pub fn set_mode(&mut self, mode: Mode, now: Timestamp) -> Result<(), DispatchError> {
        if mode != self.mode {
            self.commit(now, EventBody::ModeChanged { from: self.mode, to: mode })?;
        }
        Ok(())
    }

    /// Tags an edge risky (pruning it) or clears the tag.
    pub fn mark_risky(&mut self, edge: &EdgeId, on: bool, actor: &str, now: Timestamp) -> Result<(), DispatchError> {
        if self.graph.edge(edge).is_none() {
            return Err(DispatchError::UnknownEdge(edge.clone()));
        }
        self.commit(now, EventBody::RiskyMarked { edge: edge.clone(), on, actor: actor.to_string() })
    }

    pub fn set_goal(&mut self, goal: Option<&str>, now: Timestamp) -> Result<(), DispatchError> {
        self.commit(now, EventBody::GoalSet { goal: goal.map(str::to_string) })
    }

    pub fn record_alarm(&mut self, alarm: Alarm, now: Timestamp) -> Result<(), DispatchError> {
        self.commit(now, EventBody::Alarm { alarm })
    }

    /// Shortest plan from the current state over the session's graph, which
    /// includes any risky marks.
    pub fn plan_to(&self, target: &str) -> Result<Option<Path>, DispatchError> {
        self.graph.shortest_path(&self.current, target).map_err(|_| DispatchError::UnknownState(target.to_string()))
    }

    /// Executes the approved pending proposal.
    ///
    /// The world must agree with the session before the handler runs; after
    /// it runs the world must be in the edge's target state. When the
    /// post-check fails the session follows the observed state, the
    /// `transition_failed` flag is set and the result is `Failed`.
    pub fn step(&mut self, lib: &OperationLibrary, env: &mut dyn Environment) -> Result<TransitionResult, DispatchError> {
        self.step_observed(lib, env, None)
    }

    fn step_observed(
        &mut self,
        lib: &OperationLibrary,
        env: &mut dyn Environment,
        pre: Option<StateEstimate>,
    ) -> Result<TransitionResult, DispatchError> {
        let proposal = match &self.pending {
            Some(p) if p.decided == Some(Verdict::Approved) => p.clone(),
            _ => return Err(DispatchError::NotApproved),
        };
        if self.mode == Mode::Autonomous && self.flag(FLAG_TRANSITION_FAILED) {
            return Err(DispatchError::FlagBlocked);
        }
        let edge = self.graph.edge(&proposal.edge).cloned().ok_or_else(|| DispatchError::UnknownEdge(proposal.edge.clone()))?;
        let now = env.now();
        if edge.pruned {
            self.commit(now, EventBody::Aborted { proposal: proposal.id, reason: "edge pruned after approval".into() })?;
            return Err(DispatchError::EdgePruned(edge.id));
        }
        let Some(handler) = lib.get(edge.op()) else {
            self.commit(now, EventBody::Aborted { proposal: proposal.id, reason: format!("no handler for {}", edge.op()) })?;
            return Err(DispatchError::MissingOperation(edge.op().to_string()));
        };

        let pre = match (self.degraded, pre) {
            (true, _) => None,
            (false, Some(est)) => Some(est),
            (false, None) => Some(env.observe()?),
        };
        if let Some(pre) = &pre {
            if pre.state.as_deref() != Some(self.current.as_str()) {
                self.commit(now, EventBody::Aborted { proposal: proposal.id, reason: "pre-check failed".into() })?;
                return Err(DispatchError::PreCheckFailed { expected: self.current.clone(), observed: pre.state.clone() });
            }
        }

        let target = env.config_of(&edge.dst);
        let outcome = {
            let mut ctx = HandlerContext {
                session: &self.id,
                proposal: proposal.id,
                edge: &edge,
                scene: pre.as_ref().map(|e| &e.scene),
                target: target.as_ref(),
                world: env.world_mut(),
            };
            handler.execute(&mut ctx)
        };

        let from = self.current.clone();
        let post = if self.degraded { None } else { Some(env.observe()?) };
        let now = env.now().max(now);
        let succeeded = match &post {
            Some(post) => post.state.as_deref() == Some(edge.dst.as_str()),
            None => outcome.is_ok(),
        };
        if succeeded {
            self.commit(
                now,
                EventBody::Executed { proposal: proposal.id, edge: edge.id.clone(), from: from.clone(), to: edge.dst.clone() },
            )?;
            return Ok(TransitionResult::Executed { edge: edge.id, from, to: edge.dst, estimate: post });
        }

        let alarm = match (&pre, &post) {
            (Some(pre), Some(post)) => detect_unplanned_transition(pre, post, Some(&edge))?,
            _ => None,
        };
        if let Some(alarm) = &alarm {
            self.commit(now, EventBody::Alarm { alarm: alarm.clone() })?;
        }
        let observed = post.as_ref().and_then(|p| p.state.clone());
        let reason = match &outcome {
            Err(e) => e.to_string(),
            Ok(()) => format!("world is in {}", observed.as_deref().unwrap_or("an unknown state")),
        };
        self.commit(
            now,
            EventBody::FailedTransition {
                proposal: proposal.id,
                edge: edge.id.clone(),
                expected: edge.dst.clone(),
                observed: observed.clone(),
                reason: reason.clone(),
            },
        )?;
        self.commit(now, EventBody::FlagSet { name: FLAG_TRANSITION_FAILED.into(), value: true })?;
        Ok(TransitionResult::Failed { edge: edge.id, expected: edge.dst, observed, alarm, reason, estimate: post })
    }

    /// Executes `plan` edge by edge through propose, decide and step.
    ///
    /// Before each edge one aggregation cycle runs; a state change since the
    /// previous cycle that nothing dispatched raises an alarm and stops the
    /// run. In supervised mode `supervisor` decides every proposal. The run
    /// stops at the first veto, alarm or failure.
    pub fn run_plan(
        &mut self,
        lib: &OperationLibrary,
        env: &mut dyn Environment,
        plan: &Path,
        supervisor: &mut dyn Supervisor,
    ) -> Result<RunReport, DispatchError> {
        if plan.start != self.current {
            return Err(DispatchError::PlanMismatch { plan_start: plan.start.clone(), current: self.current.clone() });
        }
        let mut executed = Vec::new();
        let mut alarms = Vec::new();
        let mut last: Option<StateEstimate> = None;
        let mut stop = StopReason::Completed;

        for hop in &plan.hops {
            if self.flag(FLAG_TRANSITION_FAILED) {
                stop = StopReason::FlagBlocked;
                break;
            }
            if self.mode == Mode::Manual {
                stop = StopReason::Manual;
                break;
            }
            let pre = if self.degraded {
                None
            } else {
                let estimate = env.observe()?;
                if let Some(previous) = &last {
                    if let Some(alarm) = detect_unplanned_transition(previous, &estimate, None)? {
                        self.commit(env.now(), EventBody::Alarm { alarm: alarm.clone() })?;
                        alarms.push(alarm);
                        stop = StopReason::Alarm;
                        break;
                    }
                }
                Some(estimate)
            };

            let proposal = match self.propose(&hop.edge, env.now()) {
                Ok(p) => p,
                Err(DispatchError::EdgePruned(e)) => {
                    stop = StopReason::EdgePruned(e);
                    break;
                }
                Err(e) => {
                    stop = StopReason::Error(e.to_string());
                    break;
                }
            };
            if proposal.decided.is_none() {
                let decision = supervisor.review(self, &proposal);
                self.decide(proposal.id, decision.verdict, &decision.actor, env.now())?;
                if decision.verdict == Verdict::Vetoed {
                    stop = StopReason::Vetoed;
                    break;
                }
            }

            match self.step_observed(lib, env, pre) {
                Ok(TransitionResult::Executed { edge, to, estimate, .. }) => {
                    executed.push(Hop { edge, target: to });
                    last = estimate;
                }
                Ok(TransitionResult::Failed { alarm, .. }) => {
                    stop = match alarm {
                        Some(a) => {
                            alarms.push(a);
                            StopReason::Alarm
                        }
                        None => StopReason::Failed,
                    };
                    break;
                }
                Err(DispatchError::PreCheckFailed { .. }) => {
                    stop = StopReason::PreCheckFailed;
                    break;
                }
                Err(DispatchError::MissingOperation(op)) => {
                    stop = StopReason::MissingOperation(op);
                    break;
                }
                Err(DispatchError::FlagBlocked) => {
                    stop = StopReason::FlagBlocked;
                    break;
                }
                Err(DispatchError::EdgePruned(e)) => {
                    stop = StopReason::EdgePruned(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunReport { executed, final_state: self.current.clone(), stop, alarms })
    }
}
