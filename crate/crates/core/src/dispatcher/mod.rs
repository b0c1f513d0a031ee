//! Session runtime: the dispatcher that selects operations, checks the world
//! before and after each transition, tracks flags, and gates execution on
//! supervision.
//!
//! Every change to a session is recorded as a [`SupervisionEvent`] and
//! applied through the same code path on replay, so a session's history is
//! enough to rebuild it exactly.
//!
//! Two flags are reserved. `takeover` switches the session to manual mode
//! (clearing it returns to the previous mode); `transition_failed` is set
//! when a post-check fails and blocks autonomous stepping until cleared.

mod env;
mod events;
mod library;
mod session;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EdgeId;
use crate::monitor::MonitorError;
use crate::Timestamp;

pub use env::{BlindEnvironment, Environment, SimEnvironment};
pub use events::{EventBody, EventLog, SupervisionEvent};
pub use library::{
    ConfirmationHandler, ConfirmationHub, ConfirmationRequest, Handler, HandlerContext, HandlerError,
    NoPendingConfirmation, NoopHandler, OperationLibrary, OracleHandler,
};
pub use session::{
    AutoApprove, Decision, ExecutionSession, RunReport, StopReason, Supervisor, TransitionResult,
};

pub const FLAG_TAKEOVER: &str = "takeover";
pub const FLAG_TRANSITION_FAILED: &str = "transition_failed";

/// Actor recorded for approvals made by the dispatcher itself.
pub const AUTONOMOUS_ACTOR: &str = "autonomous";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Proposals are approved by the dispatcher.
    Autonomous,
    /// Every proposal waits for a supervisor's verdict.
    Supervised,
    /// A person drives; automated plan execution is refused.
    Manual,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Autonomous => "autonomous",
            Mode::Supervised => "supervised",
            Mode::Manual => "manual",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autonomous" => Ok(Mode::Autonomous),
            "supervised" => Ok(Mode::Supervised),
            "manual" => Ok(Mode::Manual),
            other => Err(format!("unknown mode {other:?} (expected autonomous, supervised or manual)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Approved,
    Vetoed,
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approved" | "approve" => Ok(Verdict::Approved),
            "vetoed" | "veto" => Ok(Verdict::Vetoed),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: u64,
    pub edge: EdgeId,
    pub proposed_at: Timestamp,
    pub decided: Option<Verdict>,
    pub decided_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("no state {0:?} in the session graph")]
    UnknownState(String),
    #[error("no edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge {edge} does not leave the current state {current:?}")]
    WrongSource { edge: EdgeId, current: String },
    #[error("edge {0} is pruned")]
    EdgePruned(EdgeId),
    #[error("proposal {0} is still pending")]
    ProposalPending(u64),
    #[error("no pending proposal {0}")]
    UnknownProposal(u64),
    #[error("proposal {0} was already decided")]
    AlreadyDecided(u64),
    #[error("no approved proposal to execute")]
    NotApproved,
    #[error("operation {0:?} is not in the operation library")]
    MissingOperation(String),
    #[error("world is in {observed:?}, session expected {expected:?}")]
    PreCheckFailed { expected: String, observed: Option<String> },
    #[error("autonomous stepping is blocked by the transition_failed flag")]
    FlagBlocked,
    #[error("plan starts at {plan_start:?} but the session is at {current:?}")]
    PlanMismatch { plan_start: String, current: String },
    #[error("operation {0:?} is already registered")]
    DuplicateName(String),
    #[error("cannot replay event log: {0}")]
    Replay(String),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}
