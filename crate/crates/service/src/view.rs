use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smsl_core::dispatcher::{Mode, Proposal};
use smsl_core::graph::{Edge, FsmGraph, Path};
use smsl_core::smsl::ValidationReport;
use smsl_core::state::SceneSnapshot;

/// One edge as shown to a supervisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEdge {
    pub operation: String,
    pub source: String,
    pub target: String,
    pub risky: bool,
    pub pruned: bool,
    pub cost: f64,
}

impl From<&Edge> for ViewEdge {
    fn from(e: &Edge) -> Self {
        ViewEdge {
            operation: e.op().to_string(),
            source: e.src().to_string(),
            target: e.dst.clone(),
            risky: e.risky,
            pruned: e.pruned,
            cost: e.cost,
        }
    }
}

/// A confirmation a handler of this session is blocked on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwaitingView {
    pub token: String,
    pub proposal: u64,
    pub operation: String,
}

/// What a supervisor sees: the current state and the moves out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialView {
    pub session: String,
    pub branch: String,
    pub current: String,
    /// Latest observed scene; `None` for branches without sensing.
    pub scene: Option<SceneSnapshot>,
    pub out_edges: Vec<ViewEdge>,
    /// Only present when requested with `?incoming=true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_edges: Option<Vec<ViewEdge>>,
    pub pending: Option<Proposal>,
    pub mode: Mode,
    pub flags: BTreeMap<String, bool>,
    pub awaiting: Vec<AwaitingView>,
    pub prediction: Option<serde_json::Value>,
    /// Number of events recorded for the session so far.
    pub seq: u64,
}

/// What an inspector sees: the whole branch.
#[derive(Debug, Clone, Serialize)]
pub struct FullView {
    pub branch: String,
    /// The loaded document in canonical SMSL form.
    pub document: String,
    pub graph: FsmGraph,
    pub validation: ValidationReport,
    pub dot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub branch: String,
    pub current: String,
    pub mode: Mode,
    pub goal: Option<String>,
    pub degraded: bool,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHop {
    pub source: String,
    pub operation: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub from: String,
    pub to: String,
    pub reachable: bool,
    pub hops: Vec<PlanHop>,
    pub total_cost: Option<f64>,
}

impl PlanView {
    pub fn new(from: &str, to: &str, path: Option<&Path>) -> Self {
        PlanView {
            from: from.to_string(),
            to: to.to_string(),
            reachable: path.is_some(),
            hops: path
                .map(|p| {
                    p.hops
                        .iter()
                        .map(|h| PlanHop {
                            source: h.edge.src.clone(),
                            operation: h.edge.op.clone(),
                            target: h.target.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default(),
            total_cost: path.map(|p| p.total_cost),
        }
    }
}

/// Fills the `prediction` slot of partial views.
pub trait Predictor: Send + Sync {
    fn predict(&self, view: &PartialView) -> Option<serde_json::Value>;
}

/// The default predictor: never predicts anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPrediction;

impl Predictor for NoPrediction {
    fn predict(&self, _: &PartialView) -> Option<serde_json::Value> {
        None
    }
}
