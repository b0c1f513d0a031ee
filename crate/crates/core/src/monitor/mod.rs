//! State monitoring from sensor readings.
//!
//! Each fact of a branch is bound to one sensor. Readings are collected in a
//! [`ReadingStore`] (latest reading per sensor wins), [`aggregate`] turns the
//! latest readings into a scene snapshot and a state estimate, and
//! [`detect_unplanned_transition`] compares consecutive estimates against
//! what the dispatcher actually ran.
//!
//! Identification is fail-closed: a missing or stale reading makes the fact
//! unknown, and any unknown fact makes the state unknown.

mod replay;
mod sim;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, EdgeId};
use crate::state::{BranchModel, SceneSnapshot, StateError};
use crate::Timestamp;

pub use replay::{format_replay, parse_replay, ReplayError};
pub use sim::{Faults, SimNetwork, World};

/// Default freshness bound for readings.
pub const DEFAULT_STALENESS: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("sensor {0:?} is not registered")]
    UnknownSensor(String),
    #[error("sensor map does not cover facts {missing:?}")]
    IncompleteMap { missing: Vec<usize> },
    #[error("estimates belong to different branches ({0:?} vs {1:?})")]
    BranchMismatch(String, String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor_id: String,
    pub value: char,
    pub at: Timestamp,
}

impl SensorReading {
    pub fn new(sensor_id: impl Into<String>, value: char, at: Timestamp) -> Self {
        SensorReading { sensor_id: sensor_id.into(), value, at }
    }
}

/// Binds every fact index of a branch to exactly one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorMap {
    bindings: BTreeMap<usize, String>,
    pub staleness_limit: Duration,
}

impl SensorMap {
    /// Sensor `ids[i]` reports fact `i`.
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Self {
        SensorMap {
            bindings: ids.into_iter().map(Into::into).enumerate().collect(),
            staleness_limit: DEFAULT_STALENESS,
        }
    }

    /// Sensors named `<prefix><i>` for facts `0..fact_count`.
    pub fn numbered(prefix: &str, fact_count: usize) -> Self {
        SensorMap::new((0..fact_count).map(|i| format!("{prefix}{i}")))
    }

    pub fn with_staleness(mut self, limit: Duration) -> Self {
        self.staleness_limit = limit;
        self
    }

    pub fn bind(&mut self, fact_index: usize, sensor_id: impl Into<String>) {
        self.bindings.insert(fact_index, sensor_id.into());
    }

    pub fn sensor_for(&self, fact_index: usize) -> Option<&str> {
        self.bindings.get(&fact_index).map(String::as_str)
    }

    pub fn fact_of(&self, sensor_id: &str) -> Option<usize> {
        self.bindings.iter().find(|(_, s)| *s == sensor_id).map(|(&i, _)| i)
    }

    pub fn sensors(&self) -> impl Iterator<Item = (usize, &str)> {
        self.bindings.iter().map(|(&i, s)| (i, s.as_str()))
    }

    fn check_covers(&self, fact_count: usize) -> Result<(), MonitorError> {
        let missing: Vec<usize> = (0..fact_count).filter(|i| !self.bindings.contains_key(i)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(MonitorError::IncompleteMap { missing })
        }
    }
}

/// Outcome of [`ReadingStore::ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Accepted,
    /// Older than the retained reading for the same sensor.
    DiscardedOutOfOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutOfOrderWarning {
    pub discarded: SensorReading,
    pub retained_at: Timestamp,
}

/// Latest reading per registered sensor. Safe to share between producer
/// threads; aggregation works on a consistent copy.
#[derive(Debug, Default)]
pub struct ReadingStore {
    registered: HashSet<String>,
    latest: Mutex<HashMap<String, SensorReading>>,
    warnings: Mutex<Vec<OutOfOrderWarning>>,
}

impl ReadingStore {
    pub fn new<S: Into<String>>(sensors: impl IntoIterator<Item = S>) -> Self {
        ReadingStore { registered: sensors.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn for_map(map: &SensorMap) -> Self {
        ReadingStore::new(map.sensors().map(|(_, s)| s.to_string()))
    }

    pub fn is_registered(&self, sensor_id: &str) -> bool {
        self.registered.contains(sensor_id)
    }

    /// Keeps the reading unless a newer one from the same sensor is already
    /// held; equal timestamps replace.
    pub fn ingest(&self, reading: SensorReading) -> Result<Ingest, MonitorError> {
        if !self.registered.contains(&reading.sensor_id) {
            return Err(MonitorError::UnknownSensor(reading.sensor_id));
        }
        let mut latest = self.latest.lock();
        if let Some(held) = latest.get(&reading.sensor_id) {
            if reading.at < held.at {
                let retained_at = held.at;
                drop(latest);
                self.warnings.lock().push(OutOfOrderWarning { discarded: reading, retained_at });
                return Ok(Ingest::DiscardedOutOfOrder);
            }
        }
        latest.insert(reading.sensor_id.clone(), reading);
        Ok(Ingest::Accepted)
    }

    pub fn latest(&self, sensor_id: &str) -> Option<SensorReading> {
        self.latest.lock().get(sensor_id).cloned()
    }

    pub fn snapshot(&self) -> HashMap<String, SensorReading> {
        self.latest.lock().clone()
    }

    pub fn warnings(&self) -> Vec<OutOfOrderWarning> {
        self.warnings.lock().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEstimate {
    /// `None` means unknown.
    pub state: Option<String>,
    pub scene: SceneSnapshot,
    /// Facts with no reading or a reading older than the staleness limit.
    pub stale_facts: BTreeSet<usize>,
}

impl StateEstimate {
    pub fn branch(&self) -> &str {
        &self.scene.branch
    }
}

/// Builds the scene from the latest readings at `now` and identifies the
/// state it corresponds to.
pub fn aggregate(
    model: &BranchModel,
    map: &SensorMap,
    store: &ReadingStore,
    now: Timestamp,
) -> Result<StateEstimate, MonitorError> {
    let fact_count = model
        .fact_count()
        .filter(|_| model.is_decodable())
        .ok_or_else(|| StateError::NotDecodableBranch(model.branch().to_string()))?;
    map.check_covers(fact_count)?;
    let readings = store.snapshot();
    let mut values = Vec::with_capacity(fact_count);
    let mut stale_facts = BTreeSet::new();
    for i in 0..fact_count {
        let sensor = map.sensor_for(i).expect("coverage checked");
        match readings.get(sensor) {
            Some(r) if now.since(r.at) <= map.staleness_limit => values.push(Some(r.value)),
            _ => {
                values.push(None);
                stale_facts.insert(i);
            }
        }
    }
    let scene = SceneSnapshot::new(model.branch(), values, now);
    let state = if stale_facts.is_empty() { model.identify(&scene)?.map(str::to_string) } else { None };
    Ok(StateEstimate { state, scene, stale_facts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlarmKind {
    /// The state changed with nothing dispatched.
    UnplannedTransition,
    /// The state changed, but not to the dispatched edge's target.
    TargetMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub kind: AlarmKind,
    pub from: Option<String>,
    pub to: Option<String>,
    pub dispatched: Option<EdgeId>,
    pub at: Timestamp,
}

/// Raises an alarm when the estimated state changed between two aggregation
/// cycles and the change is not explained by the dispatched edge.
pub fn detect_unplanned_transition(
    previous: &StateEstimate,
    current: &StateEstimate,
    dispatched: Option<&Edge>,
) -> Result<Option<Alarm>, MonitorError> {
    if previous.branch() != current.branch() {
        return Err(MonitorError::BranchMismatch(previous.branch().to_string(), current.branch().to_string()));
    }
    if previous.state == current.state {
        return Ok(None);
    }
    let kind = match dispatched {
        None => AlarmKind::UnplannedTransition,
        Some(e) if current.state.as_deref() == Some(e.dst.as_str()) => return Ok(None),
        Some(_) => AlarmKind::TargetMismatch,
    };
    Ok(Some(Alarm {
        kind,
        from: previous.state.clone(),
        to: current.state.clone(),
        dispatched: dispatched.map(|e| e.id.clone()),
        at: current.scene.as_of,
    }))
}
