//! The SMSL document model, parser, serializer and validator.
//!
//! SMSL text is brace/quote/comma object notation. The top level maps branch
//! names to branches; a branch maps state names to operation tables plus an
//! optional `HEADER`; an operation table maps operation names to target state
//! names. Keys starting with an underscore are comments and are dropped at
//! every nesting level.

mod parse;
mod serialize;
mod validate;

use std::fmt;
use std::ops::{Deref, DerefMut};

use indexmap::IndexMap;
use thiserror::Error;

pub use parse::parse;
pub use serialize::serialize;
pub use validate::{validate, Finding, FindingCode, Severity, ValidationReport};

/// Reserved key holding a branch's header.
pub const HEADER_KEY: &str = "HEADER";

/// A string-keyed map that keeps insertion order and compares
/// order-sensitively, so two documents are equal only if their declarations
/// appear in the same order.
#[derive(Debug, Clone)]
pub struct OrderedMap<V>(IndexMap<String, V>);

impl<V> OrderedMap<V> {
    pub fn new() -> Self {
        OrderedMap(IndexMap::new())
    }
}

impl<V> Default for OrderedMap<V> {
    fn default() -> Self {
        OrderedMap::new()
    }
}

impl<V: PartialEq> PartialEq for OrderedMap<V> {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().eq(other.0.iter())
    }
}

impl<V: Eq> Eq for OrderedMap<V> {}

impl<V> Deref for OrderedMap<V> {
    type Target = IndexMap<String, V>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl<V> DerefMut for OrderedMap<V> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

impl<V> FromIterator<(String, V)> for OrderedMap<V> {
    fn from_iter<T: IntoIterator<Item = (String, V)>>(iter: T) -> Self {
        OrderedMap(iter.into_iter().collect())
    }
}

impl<'a, V> IntoIterator for &'a OrderedMap<V> {
    type Item = (&'a String, &'a V);
    type IntoIter = indexmap::map::Iter<'a, String, V>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Operation name → target state name, in declaration order.
pub type Operations = OrderedMap<String>;

/// A generic SMSL value. Only used for header fields this crate does not
/// interpret, so they survive a parse/serialize round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Null,
    Bool(bool),
    /// Number literal exactly as written.
    Number(String),
    String(String),
    Array(Vec<Value>),
    Object(OrderedMap<Value>),
}

/// A parsed SMSL document: named state branches in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SmslDocument {
    branches: OrderedMap<StateBranch>,
}

/// One finite state machine of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBranch {
    name: String,
    pub header: BranchHeader,
    states: OrderedMap<Operations>,
}

/// Branch header. Every field is optional in the source text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BranchHeader {
    pub initial: Option<String>,
    pub activating: Option<String>,
    pub num_facts: Option<usize>,
    /// Sub-branch name → zero-based fact index of this branch it drives.
    pub sub_sbs: OrderedMap<usize>,
    /// Header fields this crate does not interpret. Kept for round trips and
    /// reported as warnings by validation.
    pub extra: OrderedMap<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("name {0:?} starts with an underscore")]
    Underscore(String),
    #[error("name {0:?} is reserved")]
    Reserved(String),
    #[error("duplicate name {0:?}")]
    Duplicate(String),
    #[error("no state named {0:?}")]
    NoSuchState(String),
}

impl SmslDocument {
    pub fn new() -> Self {
        SmslDocument::default()
    }

    pub fn branches(&self) -> impl ExactSizeIterator<Item = &StateBranch> {
        self.branches.values()
    }

    pub fn branch_names(&self) -> impl ExactSizeIterator<Item = &str> {
        self.branches.keys().map(String::as_str)
    }

    pub fn branch(&self, name: &str) -> Option<&StateBranch> {
        self.branches.get(name)
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Appends a branch. Names must be unique and must not start with `_`.
    pub fn push_branch(&mut self, branch: StateBranch) -> Result<(), BuildError> {
        if branch.name.starts_with('_') {
            return Err(BuildError::Underscore(branch.name));
        }
        if self.branches.contains_key(&branch.name) {
            return Err(BuildError::Duplicate(branch.name));
        }
        self.branches.insert(branch.name.clone(), branch);
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.branches().map(StateBranch::state_count).sum()
    }

    pub fn operation_count(&self) -> usize {
        self.branches().map(StateBranch::operation_count).sum()
    }
}

impl StateBranch {
    pub fn new(name: impl Into<String>) -> Self {
        StateBranch {
            name: name.into(),
            header: BranchHeader::default(),
            states: OrderedMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &OrderedMap<Operations> {
        &self.states
    }

    pub fn state_names(&self) -> impl ExactSizeIterator<Item = &str> {
        self.states.keys().map(String::as_str)
    }

    pub fn operations(&self, state: &str) -> Option<&Operations> {
        self.states.get(state)
    }

    pub fn contains_state(&self, state: &str) -> bool {
        self.states.contains_key(state)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn operation_count(&self) -> usize {
        self.states.values().map(|ops| ops.len()).sum()
    }

    /// Declares a new state with no operations.
    pub fn add_state(&mut self, name: impl Into<String>) -> Result<(), BuildError> {
        let name = name.into();
        if name.starts_with('_') {
            return Err(BuildError::Underscore(name));
        }
        if name == HEADER_KEY {
            return Err(BuildError::Reserved(name));
        }
        if self.states.contains_key(&name) {
            return Err(BuildError::Duplicate(name));
        }
        self.states.insert(name, Operations::new());
        Ok(())
    }

    /// Adds an operation to an already declared state. The target is not
    /// checked here; dangling targets are reported by [`validate`].
    pub fn add_operation(
        &mut self,
        state: &str,
        operation: impl Into<String>,
        target: impl Into<String>,
    ) -> Result<(), BuildError> {
        let operation = operation.into();
        if operation.starts_with('_') {
            return Err(BuildError::Underscore(operation));
        }
        let ops = self
            .states
            .get_mut(state)
            .ok_or_else(|| BuildError::NoSuchState(state.to_string()))?;
        if ops.contains_key(&operation) {
            return Err(BuildError::Duplicate(operation));
        }
        ops.insert(operation, target.into());
        Ok(())
    }

    /// `INITIAL` if declared, otherwise the first declared state.
    pub fn effective_initial(&self) -> Option<&str> {
        self.header
            .initial
            .as_deref()
            .or_else(|| self.states.keys().next().map(String::as_str))
    }

    /// `ACTIVATING` if declared, otherwise the last declared state.
    pub fn effective_activating(&self) -> Option<&str> {
        self.header
            .activating
            .as_deref()
            .or_else(|| self.states.keys().last().map(String::as_str))
    }
}

impl fmt::Display for SmslDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

/// Position in the source text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// Malformed text or a duplicate key.
    #[error("syntax error at {at}: {message}")]
    Syntax { at: Location, message: String },
    /// A value of the wrong kind, e.g. a state that is not a mapping.
    #[error("type error at {at}: {message}")]
    Type { at: Location, message: String },
    /// A header field with the wrong shape.
    #[error("structure error at {at}: {message}")]
    Structure { at: Location, message: String },
}

impl ParseError {
    pub fn location(&self) -> Location {
        match self {
            ParseError::Syntax { at, .. }
            | ParseError::Type { at, .. }
            | ParseError::Structure { at, .. } => *at,
        }
    }
}
