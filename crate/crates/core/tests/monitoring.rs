mod common;

use std::collections::HashSet;
use std::time::Duration;

use proptest::prelude::*;
use smsl_core::monitor::{
    aggregate, format_replay, parse_replay, Faults, ReadingStore, SensorMap, SensorReading, SimNetwork, World,
};
use smsl_core::state::{BranchModel, FactConfig};
use smsl_core::Timestamp;

fn readings() -> impl Strategy<Value = Vec<SensorReading>> {
    prop::collection::vec(
        (0usize..3, prop::sample::select(vec!['a', 'b', 'c']), 0u64..20),
        0..40,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(s, value, t)| SensorReading::new(format!("fact{s}"), value, Timestamp(t * 250)))
            .collect()
    })
}

proptest! {
    #[test]
    fn newest_reading_wins_regardless_of_arrival_order(mut rs in readings(), seed in any::<u64>()) {
        let a = ReadingStore::new(["fact0", "fact1", "fact2"]);
        for r in &rs {
            a.ingest(r.clone()).unwrap();
        }
        let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(rs.as_mut_slice(), &mut rng);
        let b = ReadingStore::new(["fact0", "fact1", "fact2"]);
        for r in &rs {
            b.ingest(r.clone()).unwrap();
        }
        for s in ["fact0", "fact1", "fact2"] {
            prop_assert_eq!(a.latest(s).map(|r| r.at), b.latest(s).map(|r| r.at));
        }
    }

    #[test]
    fn replay_files_round_trip(rs in readings()) {
        prop_assert_eq!(parse_replay(&format_replay(&rs)).unwrap(), rs);
    }
}

#[test]
fn lossy_network_eventually_identifies_state() {
    let doc = common::hanoi();
    let model = BranchModel::new(doc.branch("SB1").unwrap());
    let map = SensorMap::numbered("fact", 3).with_staleness(Duration::from_secs(30));
    let store = ReadingStore::for_map(&map);
    let faults = Faults {
        loss: 0.5,
        delay: Duration::from_millis(200),
        jitter: Duration::from_millis(700),
        reorder: true,
        silent: HashSet::new(),
    };
    let mut net = SimNetwork::new(faults, 42);
    let world = World::new(&FactConfig::from("bca"));
    let mut identified = None;
    for cycle in 0..40 {
        let now = Timestamp(cycle * 1000);
        net.publish(&map, &world, now);
        net.deliver(now, &store).unwrap();
        let est = aggregate(&model, &map, &store, now).unwrap();
        if est.state.is_some() {
            identified = est.state;
            break;
        }
    }
    assert_eq!(identified.as_deref(), Some("State_bca"));
}

#[test]
fn silent_sensor_leaves_state_unknown() {
    let doc = common::hanoi();
    let model = BranchModel::new(doc.branch("SB1").unwrap());
    let map = SensorMap::numbered("fact", 3);
    let store = ReadingStore::for_map(&map);
    let faults = Faults { silent: HashSet::from(["fact2".to_string()]), ..Faults::default() };
    let mut net = SimNetwork::new(faults, 1);
    let world = World::new(&FactConfig::from("aaa"));
    for cycle in 0..5 {
        let now = Timestamp(cycle * 1000);
        net.publish(&map, &world, now);
        net.deliver(now, &store).unwrap();
        let est = aggregate(&model, &map, &store, now).unwrap();
        assert_eq!(est.state, None);
        assert!(est.stale_facts.contains(&2));
    }
}
