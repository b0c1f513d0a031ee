//! In-process stand-in for the sensor network: a simulated world holding the
//! true fact values, and a lossy, delaying, reordering transport from sensors
//! to the reading store.

use std::collections::HashSet;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::{Ingest, MonitorError, ReadingStore, SensorMap, SensorReading};
use crate::state::FactConfig;
use crate::Timestamp;

/// Ground truth: the actual value of every fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub facts: Vec<char>,
}

impl World {
    pub fn new(config: &FactConfig) -> Self {
        World { facts: config.digits().to_vec() }
    }

    pub fn set(&mut self, config: &FactConfig) {
        self.facts = config.digits().to_vec();
    }

    pub fn config(&self) -> FactConfig {
        FactConfig::new(self.facts.clone())
    }
}

/// Transport faults to inject.
#[derive(Debug, Clone, Default)]
pub struct Faults {
    /// Probability that a reading is lost.
    pub loss: f64,
    /// Fixed transport delay.
    pub delay: Duration,
    /// Extra uniformly random delay in `[0, jitter]`.
    pub jitter: Duration,
    /// Deliver readings that arrive in the same cycle in random order.
    pub reorder: bool,
    /// Sensors that never report.
    pub silent: HashSet<String>,
}

#[derive(Debug)]
pub struct SimNetwork {
    faults: Faults,
    rng: StdRng,
    in_flight: Vec<(Timestamp, u64, SensorReading)>,
    seq: u64,
}

impl SimNetwork {
    /// A perfect network: no loss, no delay.
    pub fn reliable() -> Self {
        SimNetwork::new(Faults::default(), 0)
    }

    pub fn new(faults: Faults, seed: u64) -> Self {
        SimNetwork { faults, rng: StdRng::seed_from_u64(seed), in_flight: Vec::new(), seq: 0 }
    }

    pub fn faults_mut(&mut self) -> &mut Faults {
        &mut self.faults
    }

    /// Every bound sensor samples the world at `now` and sends its reading.
    pub fn publish(&mut self, map: &SensorMap, world: &World, now: Timestamp) {
        for (fact, sensor) in map.sensors() {
            let Some(&value) = world.facts.get(fact) else { continue };
            self.send(SensorReading::new(sensor, value, now), now);
        }
    }

    /// Sends one reading through the faulty transport.
    pub fn send(&mut self, reading: SensorReading, now: Timestamp) {
        if self.faults.silent.contains(&reading.sensor_id) {
            return;
        }
        if self.faults.loss > 0.0 && self.rng.random_bool(self.faults.loss.min(1.0)) {
            return;
        }
        let mut delay = self.faults.delay;
        if !self.faults.jitter.is_zero() {
            let extra = self.rng.random_range(0..=self.faults.jitter.as_millis() as u64);
            delay += Duration::from_millis(extra);
        }
        self.seq += 1;
        self.in_flight.push((now.after(delay), self.seq, reading));
    }

    /// Hands every reading due by `now` to the store.
    pub fn deliver(&mut self, now: Timestamp, store: &ReadingStore) -> Result<Vec<Ingest>, MonitorError> {
        let (mut due, pending): (Vec<_>, Vec<_>) = self.in_flight.drain(..).partition(|(t, _, _)| *t <= now);
        self.in_flight = pending;
        if self.faults.reorder {
            due.shuffle(&mut self.rng);
        } else {
            due.sort_by_key(|(t, seq, _)| (*t, *seq));
        }
        due.into_iter().map(|(_, _, r)| store.ingest(r)).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}
