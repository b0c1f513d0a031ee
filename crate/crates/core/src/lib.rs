//! Toolkit for workflows written in SMSL, the State Machine Serialization
//! Language.
//!
//! An SMSL document is a set of *state branches*. Each branch is a finite
//! state machine whose states are full assignments of *facts* about the
//! scene and whose operations are labeled transitions. The crate is layered:
//!
//! * [`smsl`] parses, validates and serializes documents.
//! * [`state`] decodes fact configurations from state names, evaluates state
//!   check functions against scene snapshots, and resolves hierarchical facts.
//! * [`graph`] turns a branch into a multidigraph for planning and DOT export.
//! * [`monitor`] aggregates sensor readings into a scene and estimates the
//!   current state, raising alarms on unplanned transitions.
//! * [`dispatcher`] runs sessions: proposals, supervision verdicts, gated
//!   execution through an operation library, and an append-only event history.
//!
//! ```
//! use smsl_core::{corpus, graph::FsmGraph, smsl};
//!
//! let doc = smsl::parse(corpus::HANOI).unwrap();
//! let graph = FsmGraph::build(doc.branch("SB1").unwrap());
//! let path = graph.shortest_path("State_aaa", "State_ccc").unwrap().unwrap();
//! assert_eq!(path.len(), 7);
//! ```

pub mod corpus;
pub mod dispatcher;
pub mod graph;
pub mod monitor;
pub mod smsl;
pub mod state;
mod time;

pub use time::Timestamp;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/smsl.md")]
    mod smsl {}
    #[doc = include_str!("../../../book/src/state-model.md")]
    mod state_model {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/monitoring.md")]
    mod monitoring {}
    #[doc = include_str!("../../../book/src/dispatcher.md")]
    mod dispatcher {}
}
