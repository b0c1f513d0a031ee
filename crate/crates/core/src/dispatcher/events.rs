use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mode, Verdict};
use crate::graph::EdgeId;
use crate::monitor::Alarm;
use crate::Timestamp;

/// One audit record. Serialized as a single line
/// `{"ts":..,"session":..,"kind":..,"payload":{..}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionEvent {
    pub ts: Timestamp,
    pub session: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    Started { branch: String, initial: String, mode: Mode, degraded: bool },
    Proposed { proposal: u64, edge: EdgeId },
    Approved { proposal: u64, actor: String },
    Vetoed { proposal: u64, actor: String },
    Executed { proposal: u64, edge: EdgeId, from: String, to: String },
    FailedTransition { proposal: u64, edge: EdgeId, expected: String, observed: Option<String>, reason: String },
    /// An approved proposal dropped before its handler ran.
    Aborted { proposal: u64, reason: String },
    Alarm { alarm: Alarm },
    FlagSet { name: String, value: bool },
    ModeChanged { from: Mode, to: Mode },
    RiskyMarked { edge: EdgeId, on: bool, actor: String },
    /// The state plan execution should drive towards, or `None` to stop.
    GoalSet { goal: Option<String> },
    /// A human-in-the-loop handler is waiting for `token`.
    AwaitingConfirmation { proposal: u64, token: String },
    Confirmed { token: String, actor: String },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Started { .. } => "Started",
            EventBody::Proposed { .. } => "Proposed",
            EventBody::Approved { .. } => "Approved",
            EventBody::Vetoed { .. } => "Vetoed",
            EventBody::Executed { .. } => "Executed",
            EventBody::FailedTransition { .. } => "FailedTransition",
            EventBody::Aborted { .. } => "Aborted",
            EventBody::Alarm { .. } => "Alarm",
            EventBody::FlagSet { .. } => "FlagSet",
            EventBody::ModeChanged { .. } => "ModeChanged",
            EventBody::RiskyMarked { .. } => "RiskyMarked",
            EventBody::GoalSet { .. } => "GoalSet",
            EventBody::AwaitingConfirmation { .. } => "AwaitingConfirmation",
            EventBody::Confirmed { .. } => "Confirmed",
        }
    }

    pub(crate) fn verdict(verdict: Verdict, proposal: u64, actor: String) -> Self {
        match verdict {
            Verdict::Approved => EventBody::Approved { proposal, actor },
            Verdict::Vetoed => EventBody::Vetoed { proposal, actor },
        }
    }
}

impl SupervisionEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Append-only line-delimited event file.
#[derive(Debug)]
pub struct EventLog {
    file: File,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { file })
    }

    /// Writes one line and flushes it before returning.
    pub fn append(&mut self, event: &SupervisionEvent) -> io::Result<()> {
        let mut line = event.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }

    /// Reads every record of a log file. A missing file reads as empty.
    pub fn read_all(path: impl AsRef<Path>) -> io::Result<Vec<SupervisionEvent>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = SupervisionEvent::from_line(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("event log line {}: {e}", n + 1)))?;
            events.push(event);
        }
        Ok(events)
    }
}
