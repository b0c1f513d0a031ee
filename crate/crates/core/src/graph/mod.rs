//! The multidigraph view of a state branch and the planning operations on
//! it.
//!
//! Nodes are states and every operation is its own directed edge, so
//! parallel edges and self-loops are kept. Edges carry a non-negative cost
//! (default 1) and can be pruned; a risky edge is always pruned. Planning is
//! Dijkstra over non-pruned edges with deterministic tie-breaking: the
//! frontier pops the cheapest node first, equal costs by state name, and
//! edges are relaxed in operation-name order, replacing a predecessor only
//! on a strictly cheaper cost.

mod dot;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smsl::StateBranch;

pub use dot::{export_dot, parse_dot, DotError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("no state named {0:?} in the graph")]
    UnknownNode(String),
    #[error("no edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge cost must be finite and non-negative, got {0}")]
    NegativeCost(f64),
}

/// Identifies an edge by its source state and operation name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId {
    pub src: String,
    pub op: String,
}

impl EdgeId {
    pub fn new(src: impl Into<String>, op: impl Into<String>) -> Self {
        EdgeId { src: src.into(), op: op.into() }
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.src, self.op)
    }
}

impl FromStr for EdgeId {
    type Err = String;

    /// Parses `STATE:OPERATION`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once(':') {
            Some((src, op)) if !src.is_empty() && !op.is_empty() => Ok(EdgeId::new(src, op)),
            _ => Err(format!("expected STATE:OPERATION, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub dst: String,
    pub cost: f64,
    pub pruned: bool,
    pub risky: bool,
}

impl Edge {
    pub fn src(&self) -> &str {
        &self.id.src
    }

    pub fn op(&self) -> &str {
        &self.id.op
    }
}

/// One step of a path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub edge: EdgeId,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub start: String,
    pub hops: Vec<Hop>,
    pub total_cost: f64,
}

impl Path {
    pub fn empty(start: impl Into<String>) -> Self {
        Path { start: start.into(), hops: Vec::new(), total_cost: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn end(&self) -> &str {
        self.hops.last().map_or(&self.start, |h| &h.target)
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeId> {
        self.hops.iter().map(|h| &h.edge)
    }

    /// Visited states, `start` first.
    pub fn states(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.start.as_str()).chain(self.hops.iter().map(|h| h.target.as_str()))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut from = self.start.as_str();
        for hop in &self.hops {
            writeln!(f, "{from} --{}--> {}", hop.edge.op, hop.target)?;
            from = &hop.target;
        }
        write!(f, "total cost: {}", self.total_cost)
    }
}

/// Graph form of one state branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsmGraph {
    branch: String,
    nodes: Vec<String>,
    edges: Vec<Edge>,
    #[serde(skip)]
    node_index: HashMap<String, usize>,
    #[serde(skip)]
    edge_index: HashMap<EdgeId, usize>,
    /// Outgoing edge indices per node, sorted by operation name.
    #[serde(skip)]
    out: Vec<Vec<usize>>,
    /// Rank of each node's name in lexicographic order.
    #[serde(skip)]
    rank: Vec<usize>,
}

impl FsmGraph {
    /// One node per state and one edge per operation; unit costs, nothing
    /// pruned. Operations whose target is not a declared state are skipped,
    /// which only happens for branches that failed validation.
    pub fn build(branch: &StateBranch) -> Self {
        let nodes: Vec<String> = branch.state_names().map(str::to_string).collect();
        let mut edges = Vec::with_capacity(branch.operation_count());
        for (state, ops) in branch.states() {
            for (op, target) in ops {
                if branch.contains_state(target) {
                    edges.push(Edge {
                        id: EdgeId::new(state.clone(), op.clone()),
                        dst: target.clone(),
                        cost: 1.0,
                        pruned: false,
                        risky: false,
                    });
                }
            }
        }
        FsmGraph::from_parts(branch.name(), nodes, edges)
    }

    pub(crate) fn from_parts(branch: &str, nodes: Vec<String>, edges: Vec<Edge>) -> Self {
        let node_index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let edge_index = edges.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        let mut out = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            out[node_index[e.src()]].push(i);
        }
        for list in &mut out {
            list.sort_by(|&a, &b| edges[a].op().cmp(edges[b].op()));
        }
        let mut by_name: Vec<usize> = (0..nodes.len()).collect();
        by_name.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let mut rank = vec![0; nodes.len()];
        for (r, &i) in by_name.iter().enumerate() {
            rank[i] = r;
        }
        FsmGraph { branch: branch.to_string(), nodes, edges, node_index, edge_index, out, rank }
    }

    pub fn branch(&self) -> &str {
        &self.branch
    }

    /// States in declaration order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Edges in declaration order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_node(&self, state: &str) -> bool {
        self.node_index.contains_key(state)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&Edge> {
        self.edge_index.get(id).map(|&i| &self.edges[i])
    }

    fn node(&self, state: &str) -> Result<usize, GraphError> {
        self.node_index.get(state).copied().ok_or_else(|| GraphError::UnknownNode(state.to_string()))
    }

    fn edge_mut(&mut self, id: &EdgeId) -> Result<&mut Edge, GraphError> {
        match self.edge_index.get(id) {
            Some(&i) => Ok(&mut self.edges[i]),
            None => Err(GraphError::UnknownEdge(id.clone())),
        }
    }

    /// Every outgoing edge of `state` in declaration order, pruned or not.
    pub fn out_edges(&self, state: &str) -> Result<Vec<&Edge>, GraphError> {
        self.node(state)?;
        Ok(self.edges.iter().filter(|e| e.src() == state).collect())
    }

    /// Every incoming edge of `state` in declaration order, pruned or not.
    pub fn in_edges(&self, state: &str) -> Result<Vec<&Edge>, GraphError> {
        self.node(state)?;
        Ok(self.edges.iter().filter(|e| e.dst == state).collect())
    }

    /// Non-pruned outgoing edges, in operation-name order.
    pub fn successors(&self, state: &str) -> Result<Vec<&Edge>, GraphError> {
        let n = self.node(state)?;
        Ok(self.out[n].iter().map(|&i| &self.edges[i]).filter(|e| !e.pruned).collect())
    }

    /// Excludes an edge from planning.
    pub fn prune_edge(&mut self, id: &EdgeId) -> Result<(), GraphError> {
        let e = self.edge_mut(id)?;
        e.pruned = true;
        Ok(())
    }

    /// Makes a pruned edge plannable again and clears its risky mark.
    pub fn restore_edge(&mut self, id: &EdgeId) -> Result<(), GraphError> {
        let e = self.edge_mut(id)?;
        e.pruned = false;
        e.risky = false;
        Ok(())
    }

    /// Tags an edge risky (and pruned) or clears the tag (and restores it).
    pub fn mark_risky(&mut self, id: &EdgeId, on: bool) -> Result<(), GraphError> {
        let e = self.edge_mut(id)?;
        e.risky = on;
        e.pruned = on;
        Ok(())
    }

    pub fn set_edge_cost(&mut self, id: &EdgeId, cost: f64) -> Result<(), GraphError> {
        check_cost(cost)?;
        self.edge_mut(id)?.cost = cost;
        Ok(())
    }

    /// States reachable from `from` over non-pruned edges, `from` included.
    pub fn reachable_from(&self, from: &str) -> Result<BTreeSet<String>, GraphError> {
        let start = self.node(from)?;
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &i in &self.out[n] {
                let e = &self.edges[i];
                if e.pruned {
                    continue;
                }
                let d = self.node_index[&e.dst];
                if !seen[d] {
                    seen[d] = true;
                    queue.push_back(d);
                }
            }
        }
        Ok(seen.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| self.nodes[i].clone()).collect())
    }

    /// Minimum-cost path over non-pruned edges using the stored edge costs.
    /// `Ok(None)` means `to` is unreachable.
    pub fn shortest_path(&self, from: &str, to: &str) -> Result<Option<Path>, GraphError> {
        self.shortest_path_with(from, to, |e| e.cost)
    }

    /// Like [`FsmGraph::shortest_path`], with each edge's cost supplied by
    /// `cost` for this call only. The hook sees the edge (and so its source
    /// state) and nothing else.
    pub fn shortest_path_with(
        &self,
        from: &str,
        to: &str,
        cost: impl Fn(&Edge) -> f64,
    ) -> Result<Option<Path>, GraphError> {
        let start = self.node(from)?;
        let goal = self.node(to)?;
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(Reverse((Cost(0.0), self.rank[start], start)));

        while let Some(Reverse((Cost(d), _, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == goal {
                break;
            }
            for &i in &self.out[u] {
                let e = &self.edges[i];
                if e.pruned {
                    continue;
                }
                let c = cost(e);
                check_cost(c)?;
                let v = self.node_index[&e.dst];
                let nd = d + c;
                if !done[v] && nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(i);
                    heap.push(Reverse((Cost(nd), self.rank[v], v)));
                }
            }
        }

        if !done[goal] {
            return Ok(None);
        }
        let mut hops = Vec::new();
        let mut at = goal;
        while let Some(i) = pred[at] {
            let e = &self.edges[i];
            hops.push(Hop { edge: e.id.clone(), target: e.dst.clone() });
            at = self.node_index[e.src()];
        }
        hops.reverse();
        Ok(Some(Path { start: from.to_string(), hops, total_cost: dist[goal] }))
    }

    /// DOT rendering; see [`export_dot`].
    pub fn to_dot(&self) -> String {
        export_dot(self)
    }
}

fn check_cost(c: f64) -> Result<(), GraphError> {
    if c.is_finite() && c >= 0.0 {
        Ok(())
    } else {
        Err(GraphError::NegativeCost(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
