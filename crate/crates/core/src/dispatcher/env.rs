use std::collections::VecDeque;
use std::time::Duration;

use crate::monitor::{aggregate, MonitorError, ReadingStore, SensorMap, SensorReading, SimNetwork, StateEstimate, World};
use crate::state::{BranchModel, FactConfig, StateError};
use crate::Timestamp;

/// The world a session acts on and the monitor that observes it.
pub trait Environment {
    fn now(&self) -> Timestamp;

    /// Runs one aggregation cycle and returns the state estimate.
    fn observe(&mut self) -> Result<StateEstimate, MonitorError>;

    /// The simulated world handlers act on, if any.
    fn world_mut(&mut self) -> Option<&mut World>;

    /// Fact configuration of a state, if the branch encodes one.
    fn config_of(&self, state: &str) -> Option<FactConfig>;
}

/// Simulated world, sensor network and reading store for one decodable
/// branch.
///
/// Each [`observe`](Environment::observe) call is one aggregation cycle at
/// the current time: scheduled disturbances that are due overwrite the
/// world, every sensor samples the world, due readings are delivered, the
/// readings are aggregated, and the clock advances by one tick.
#[derive(Debug)]
pub struct SimEnvironment {
    model: BranchModel,
    map: SensorMap,
    store: ReadingStore,
    network: SimNetwork,
    world: World,
    disturbances: VecDeque<SensorReading>,
    now: Timestamp,
    tick: Duration,
}

impl SimEnvironment {
    /// Starts with the world in `initial`'s configuration, at time zero, one
    /// second per cycle and a reliable network.
    pub fn new(model: BranchModel, map: SensorMap, initial: &str) -> Result<Self, MonitorError> {
        let config = model
            .config_of(initial)
            .cloned()
            .ok_or_else(|| StateError::NotDecodableBranch(model.branch().to_string()))?;
        let store = ReadingStore::for_map(&map);
        Ok(SimEnvironment {
            model,
            map,
            store,
            network: SimNetwork::reliable(),
            world: World::new(&config),
            disturbances: VecDeque::new(),
            now: Timestamp::ZERO,
            tick: Duration::from_secs(1),
        })
    }

    pub fn with_network(mut self, network: SimNetwork) -> Self {
        self.network = network;
        self
    }

    pub fn with_tick(mut self, tick: Duration) -> Self {
        self.tick = tick;
        self
    }

    /// Readings that overwrite the world's fact for their sensor once their
    /// timestamp is due, e.g. from a replay file.
    pub fn with_disturbances(mut self, mut readings: Vec<SensorReading>) -> Self {
        readings.sort_by_key(|r| r.at);
        self.disturbances = readings.into();
        self
    }

    /// Moves the clock forward to `now` (never backwards).
    pub fn advance_to(&mut self, now: Timestamp) {
        self.now = self.now.max(now);
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn store(&self) -> &ReadingStore {
        &self.store
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        &mut self.network
    }

    pub fn model(&self) -> &BranchModel {
        &self.model
    }
}

impl Environment for SimEnvironment {
    fn now(&self) -> Timestamp {
        self.now
    }

    fn observe(&mut self) -> Result<StateEstimate, MonitorError> {
        while self.disturbances.front().is_some_and(|r| r.at <= self.now) {
            let r = self.disturbances.pop_front().expect("checked");
            let fact = self.map.fact_of(&r.sensor_id).ok_or(MonitorError::UnknownSensor(r.sensor_id))?;
            if let Some(slot) = self.world.facts.get_mut(fact) {
                *slot = r.value;
            }
        }
        self.network.publish(&self.map, &self.world, self.now);
        self.network.deliver(self.now, &self.store)?;
        let estimate = aggregate(&self.model, &self.map, &self.store, self.now)?;
        self.now = self.now.after(self.tick);
        Ok(estimate)
    }

    fn world_mut(&mut self) -> Option<&mut World> {
        Some(&mut self.world)
    }

    fn config_of(&self, state: &str) -> Option<FactConfig> {
        self.model.config_of(state).cloned()
    }
}

/// Environment for branches whose state names encode no facts. Nothing can
/// be observed; sessions on such branches take transitions on trust.
#[derive(Debug, Clone, Default)]
pub struct BlindEnvironment {
    pub now: Timestamp,
}

impl Environment for BlindEnvironment {
    fn now(&self) -> Timestamp {
        self.now
    }

    fn observe(&mut self) -> Result<StateEstimate, MonitorError> {
        Err(StateError::NotDecodableBranch(String::new()).into())
    }

    fn world_mut(&mut self) -> Option<&mut World> {
        None
    }

    fn config_of(&self, _: &str) -> Option<FactConfig> {
        None
    }
}
