mod common;

use rand::rngs::StdRng;
use rand::SeedableRng;
use smsl_core::graph::{export_dot, parse_dot, FsmGraph};

fn graphs() -> Vec<FsmGraph> {
    vec![
        FsmGraph::build(common::hanoi().branch("SB1").unwrap()),
        FsmGraph::build(common::registration().branch("REGISTRATION").unwrap()),
    ]
}

fn assert_matches_oracle(g: &FsmGraph) {
    common::check_against_oracle(g).unwrap();
}

#[test]
fn unit_cost_distances_match_bfs() {
    for g in graphs() {
        assert_matches_oracle(&g);
    }
}

#[test]
fn random_prune_sets_match_bfs() {
    let mut rng = StdRng::seed_from_u64(7);
    for round in 0..120 {
        for mut g in graphs() {
            common::random_prune(&mut g, &mut rng, round % 2 == 1);
            assert_matches_oracle(&g);
        }
    }
}

#[test]
fn weighted_costs_prefer_cheaper_detours() {
    let mut g = FsmGraph::build(common::registration().branch("REGISTRATION").unwrap());
    let direct = g.shortest_path("State_0000", "State_1111").unwrap().unwrap();
    for id in direct.edges() {
        g.set_edge_cost(id, 10.0).unwrap();
    }
    let p = g.shortest_path("State_0000", "State_1111").unwrap().unwrap();
    let sum: f64 = p.edges().map(|id| g.edge(id).unwrap().cost).sum();
    assert_eq!(p.total_cost, sum);
    assert_eq!(p.total_cost, 2.0);
    assert!(p.edges().all(|id| direct.edges().all(|d| d != id)));
}

#[test]
fn dot_round_trip_keeps_pruning() {
    for mut g in graphs() {
        let id = g.edges()[3].id.clone();
        g.mark_risky(&id, true).unwrap();
        let id = g.edges()[5].id.clone();
        g.prune_edge(&id).unwrap();
        let back = parse_dot(&export_dot(&g)).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());
    }
}
