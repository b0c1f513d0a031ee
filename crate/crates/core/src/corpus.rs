//! Reference SMSL documents shipped with the crate.
//!
//! These are reviewed, reusable workflows and double as the test corpus.

/// Three-disk Tower of Hanoi: one branch `SB1`, 27 states, 78 operations.
pub const HANOI: &str = include_str!("../corpus/hanoi.smsl");

/// Medical image registration: one branch `REGISTRATION`, 8 states,
/// 42 operations.
pub const REGISTRATION: &str = include_str!("../corpus/registration.smsl");

/// Two-level hierarchical machine: `SB2` drives fact 1 of `SB1`.
pub const HIERARCHICAL: &str = include_str!("../corpus/hierarchical.smsl");
