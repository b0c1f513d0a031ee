#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use smsl_core::dispatcher::{
    EventBody, ExecutionSession, Mode, NoopHandler, OperationLibrary, SimEnvironment, SupervisionEvent, Verdict,
    FLAG_TRANSITION_FAILED,
};
use smsl_core::graph::{EdgeId, FsmGraph};
use smsl_core::monitor::SensorMap;
use smsl_core::smsl::{SmslDocument, StateBranch, Value};
use smsl_core::state::BranchModel;
use smsl_core::{corpus, Timestamp};

pub fn hanoi() -> SmslDocument {
    smsl_core::smsl::parse(corpus::HANOI).unwrap()
}

pub fn registration() -> SmslDocument {
    smsl_core::smsl::parse(corpus::REGISTRATION).unwrap()
}

pub fn hierarchical() -> SmslDocument {
    smsl_core::smsl::parse(corpus::HIERARCHICAL).unwrap()
}

const ALPHABET: &[&str] = &["a", "b", "Z", "0", "7", "_", " ", "é", "\"", "\\", "\n", "\t", "→", "😀", "\u{1}", ":"];

fn name(rng: &mut StdRng) -> String {
    loop {
        let len = rng.random_range(1..8);
        let s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !s.starts_with('_') && s != "HEADER" {
            return s;
        }
    }
}

fn unique_names(rng: &mut StdRng, max: usize) -> Vec<String> {
    let n = rng.random_range(0..max);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let s = name(rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

fn value(rng: &mut StdRng, depth: u32) -> Value {
    match rng.random_range(0..if depth > 1 { 4 } else { 6 }) {
        0 => Value::Null,
        1 => Value::Bool(rng.random()),
        2 => Value::Number(["0", "-3", "2.5", "1e9", "12"].choose(rng).unwrap().to_string()),
        3 => Value::String(name(rng)),
        4 => Value::Array((0..rng.random_range(0..3)).map(|_| value(rng, depth + 1)).collect()),
        _ => Value::Object(
            unique_names(rng, 3).into_iter().map(|k| (k, value(rng, depth + 1))).collect(),
        ),
    }
}

/// A random document that parses back to itself: legal names, operations
/// to declared states, and arbitrary (not necessarily consistent) headers.
pub fn random_document(seed: u64) -> SmslDocument {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut doc = SmslDocument::new();
    let branch_names = unique_names(&mut rng, 4);
    for bname in &branch_names {
        let mut branch = StateBranch::new(bname.clone());
        let states = unique_names(&mut rng, 7);
        for s in &states {
            branch.add_state(s.clone()).unwrap();
        }
        for s in &states {
            for op in unique_names(&mut rng, 4) {
                let target = states.choose(&mut rng).unwrap().clone();
                branch.add_operation(s, op, target).unwrap();
            }
        }
        if rng.random_bool(0.5) {
            let h = &mut branch.header;
            if rng.random_bool(0.5) {
                h.initial = states.choose(&mut rng).cloned().or_else(|| Some(name(&mut rng)));
            }
            if rng.random_bool(0.5) {
                h.activating = Some(name(&mut rng));
            }
            if rng.random_bool(0.5) {
                h.num_facts = Some(rng.random_range(1..6));
            }
            for sub in &branch_names {
                if rng.random_bool(0.3) {
                    h.sub_sbs.insert(sub.clone(), rng.random_range(0..5));
                }
            }
            if rng.random_bool(0.3) {
                let key = loop {
                    let k = name(&mut rng);
                    if !["INITIAL", "ACTIVATING", "NUM_FACTS", "SUB_SBS"].contains(&k.as_str()) {
                        break k;
                    }
                };
                h.extra.insert(key, value(&mut rng, 0));
            }
        }
        doc.push_branch(branch).unwrap();
    }
    doc
}

/// Unit-cost distances by breadth-first search over non-pruned edges.
pub fn bfs_distances(g: &FsmGraph, from: &str) -> HashMap<String, usize> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in g.edges().iter().filter(|e| !e.pruned) {
        adj.entry(e.src()).or_default().push(&e.dst);
    }
    let mut dist = HashMap::from([(from.to_string(), 0)]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for v in adj.get(u.as_str()).into_iter().flatten() {
            if !dist.contains_key(*v) {
                dist.insert(v.to_string(), d + 1);
                queue.push_back(v.to_string());
            }
        }
    }
    dist
}

pub fn sensor_map(model: &BranchModel) -> SensorMap {
    SensorMap::numbered("fact", model.fact_count().unwrap())
}

pub fn sim_env(branch: &StateBranch, initial: &str) -> SimEnvironment {
    let model = BranchModel::new(branch);
    let map = sensor_map(&model);
    SimEnvironment::new(model, map, initial).unwrap()
}

/// Outcome of one fuzzed supervised session.
pub struct FuzzRun {
    pub session: ExecutionSession,
    pub base_graph: FsmGraph,
}

/// Drives a supervised session with a random mix of proposals, verdicts,
/// steps, flag changes and risky marks. Some handlers do nothing, so
/// post-checks fail now and then.
pub fn fuzz_supervised(branch: &StateBranch, seed: u64, actions: usize) -> FuzzRun {
    let mut rng = StdRng::seed_from_u64(seed);
    let initial = branch.state_names().nth(rng.random_range(0..branch.state_count())).unwrap().to_string();
    let mut session =
        ExecutionSession::start(format!("fuzz-{seed}"), branch, Some(&initial), Mode::Supervised, Timestamp::ZERO)
            .unwrap();
    let base_graph = session.graph().clone();
    let mut lib = OperationLibrary::oracle_for(branch);
    let names: Vec<String> = lib.names().map(str::to_string).collect();
    for n in names.iter().filter(|_| rng.random_bool(0.2)) {
        lib.replace(n.clone(), Arc::new(NoopHandler));
    }
    let mut env = sim_env(branch, &initial);
    let all_edges: Vec<EdgeId> = base_graph.edges().iter().map(|e| e.id.clone()).collect();
    let mut now = Timestamp::ZERO;

    for _ in 0..actions {
        now = Timestamp(now.0 + rng.random_range(0..400));
        match rng.random_range(0..10) {
            0..=2 => {
                let edge = if rng.random_bool(0.8) {
                    let out = session.graph().out_edges(session.current()).unwrap();
                    match out.choose(&mut rng) {
                        Some(e) => e.id.clone(),
                        None => continue,
                    }
                } else {
                    all_edges.choose(&mut rng).unwrap().clone()
                };
                let _ = session.propose(&edge, now);
            }
            3..=4 => {
                let id = session.pending().map(|p| p.id).unwrap_or_else(|| rng.random_range(0..5));
                let verdict = if rng.random_bool(0.6) { Verdict::Approved } else { Verdict::Vetoed };
                let _ = session.decide(id, verdict, ["alice", "bob"].choose(&mut rng).unwrap(), now);
            }
            5..=7 => {
                env.advance_to(now);
                let _ = session.step(&lib, &mut env);
            }
            8 => {
                let _ = session.set_flag(FLAG_TRANSITION_FAILED, false, now);
            }
            _ => {
                let edge = all_edges.choose(&mut rng).unwrap();
                let _ = session.mark_risky(edge, rng.random_bool(0.5), "inspector", now);
            }
        }
    }
    FuzzRun { session, base_graph }
}

/// Checks the gating invariants over a history. Returns a description of the
/// first violation.
pub fn check_gating(history: &[SupervisionEvent], graph: &FsmGraph) -> Result<(), String> {
    let mut approved: BTreeSet<u64> = BTreeSet::new();
    let mut vetoed: BTreeSet<u64> = BTreeSet::new();
    let mut proposed: BTreeMap<u64, EdgeId> = BTreeMap::new();
    let mut state: Option<String> = None;
    for (i, ev) in history.iter().enumerate() {
        match &ev.body {
            EventBody::Started { initial, .. } => state = Some(initial.clone()),
            EventBody::Proposed { proposal, edge } => {
                proposed.insert(*proposal, edge.clone());
            }
            EventBody::Approved { proposal, .. } => {
                approved.insert(*proposal);
            }
            EventBody::Vetoed { proposal, .. } => {
                vetoed.insert(*proposal);
            }
            EventBody::Executed { proposal, edge, from, to } => {
                if !approved.contains(proposal) || proposed.get(proposal) != Some(edge) {
                    return Err(format!("event {i}: Executed without matching Approved"));
                }
                if vetoed.contains(proposal) {
                    return Err(format!("event {i}: vetoed proposal executed"));
                }
                if state.as_deref() != Some(from.as_str()) || graph.edge(edge).map(|e| &e.dst) != Some(to) {
                    return Err(format!("event {i}: Executed does not follow the graph"));
                }
                state = Some(to.clone());
            }
            EventBody::FailedTransition { proposal, observed, .. } => {
                if !approved.contains(proposal) || vetoed.contains(proposal) {
                    return Err(format!("event {i}: failed transition without approval"));
                }
                if let Some(o) = observed {
                    state = Some(o.clone());
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Compares planner output with the BFS oracle for every ordered pair of
/// distinct nodes.
pub fn check_against_oracle(g: &FsmGraph) -> Result<usize, String> {
    let mut pairs = 0;
    for from in g.nodes() {
        let oracle = bfs_distances(g, from);
        for to in g.nodes().iter().filter(|t| *t != from) {
            pairs += 1;
            let path = g.shortest_path(from, to).map_err(|e| e.to_string())?;
            match (path, oracle.get(to)) {
                (Some(p), Some(d)) => {
                    if p.len() != *d {
                        return Err(format!("{from} -> {to}: planner {} vs oracle {d}", p.len()));
                    }
                    let mut at = from.as_str();
                    for hop in &p.hops {
                        let edge = g.edge(&hop.edge).ok_or_else(|| format!("{} not in graph", hop.edge))?;
                        if edge.pruned {
                            return Err(format!("{from} -> {to} uses pruned edge {}", hop.edge));
                        }
                        if edge.src() != at || edge.dst != hop.target {
                            return Err(format!("{from} -> {to}: path is not connected at {}", hop.edge));
                        }
                        at = &hop.target;
                    }
                    if at != to {
                        return Err(format!("{from} -> {to}: path ends at {at}"));
                    }
                }
                (None, None) => {}
                (p, d) => return Err(format!("{from} -> {to}: planner {:?}, oracle {d:?}", p.map(|p| p.len()))),
            }
        }
    }
    Ok(pairs)
}

/// Prunes or marks risky a random subset of edges.
pub fn random_prune(g: &mut FsmGraph, rng: &mut StdRng, risky: bool) {
    let ids: Vec<EdgeId> = g.edges().iter().map(|e| e.id.clone()).collect();
    let p = rng.random_range(0.0..0.6);
    for id in &ids {
        if rng.random_bool(p) {
            if risky {
                g.mark_risky(id, true).unwrap();
            } else {
                g.prune_edge(id).unwrap();
            }
        }
    }
}
