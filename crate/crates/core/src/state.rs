//! Fact configurations, scene snapshots and state check functions.
//!
//! A state is a full assignment of facts. State names encode that
//! assignment as a suffix after `State_` (or `State`), one character per
//! fact: `State_aca` has disk 1 at `a`, disk 2 at `c`, disk 3 at `a`. A scene
//! snapshot holds the observed value of every fact, possibly unknown, and a
//! state is active iff the conjunction of its per-fact predicates holds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smsl::{SmslDocument, StateBranch};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("scene has {found} values but {expected} were expected")]
    LengthMismatch { expected: usize, found: usize },
    #[error("branch {0:?} has state names that do not encode fact configurations")]
    NotDecodableBranch(String),
    #[error("branch {base:?} has no sub-branch bound to fact {fact_index}")]
    NoSubBranch { base: String, fact_index: usize },
    #[error("no branch named {0:?}")]
    UnknownBranch(String),
    #[error("scene belongs to branch {found:?}, expected {expected:?}")]
    BranchMismatch { expected: String, found: String },
}

/// One symbol per fact, e.g. `['1','1','0','1']`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactConfig(Vec<char>);

impl FactConfig {
    pub fn new(digits: Vec<char>) -> Self {
        FactConfig(digits)
    }

    pub fn digits(&self) -> &[char] {
        &self.0
    }

    pub fn into_digits(self) -> Vec<char> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with fact `index` replaced by `symbol`.
    pub fn with_fact(&self, index: usize, symbol: char) -> FactConfig {
        let mut digits = self.0.clone();
        digits[index] = symbol;
        FactConfig(digits)
    }
}

impl From<&str> for FactConfig {
    fn from(s: &str) -> Self {
        FactConfig(s.chars().collect())
    }
}

impl fmt::Display for FactConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

/// Reads the fact configuration encoded in a state name.
///
/// Accepts `State_<suffix>` and, as used by hierarchical documents,
/// `State<suffix>` where the suffix does not itself start with `_`. Returns
/// `None` for any other name.
pub fn decode_state_name(name: &str) -> Option<FactConfig> {
    let suffix = match name.strip_prefix("State_") {
        Some(s) => s,
        None => name.strip_prefix("State").filter(|s| !s.starts_with('_'))?,
    };
    if suffix.is_empty() {
        return None;
    }
    Some(FactConfig(suffix.chars().collect()))
}

/// The observed value of every fact of a branch at one instant.
/// `None` means the fact is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub branch: String,
    pub values: Vec<Option<char>>,
    pub as_of: Timestamp,
}

impl SceneSnapshot {
    pub fn new(branch: impl Into<String>, values: Vec<Option<char>>, as_of: Timestamp) -> Self {
        SceneSnapshot { branch: branch.into(), values, as_of }
    }

    /// A fully known scene from one character per fact.
    pub fn known(branch: impl Into<String>, values: &str, as_of: Timestamp) -> Self {
        SceneSnapshot::new(branch, values.chars().map(Some).collect(), as_of)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// The configuration, if every fact is known.
    pub fn config(&self) -> Option<FactConfig> {
        self.values.iter().copied().collect::<Option<Vec<_>>>().map(FactConfig)
    }
}

/// Fact `fact_index` must read `expected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactPredicate {
    pub fact_index: usize,
    pub expected: char,
}

impl FactPredicate {
    /// Unknown values never satisfy a predicate.
    pub fn holds(&self, scene: &SceneSnapshot) -> bool {
        scene.values.get(self.fact_index).copied().flatten() == Some(self.expected)
    }
}

/// Conjunction of one predicate per fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCheckFunction {
    pub state: String,
    pub predicates: Vec<FactPredicate>,
}

impl StateCheckFunction {
    pub fn new(state: impl Into<String>, config: &FactConfig) -> Self {
        let predicates = config
            .digits()
            .iter()
            .enumerate()
            .map(|(fact_index, &expected)| FactPredicate { fact_index, expected })
            .collect();
        StateCheckFunction { state: state.into(), predicates }
    }

    /// Builds the check function from the configuration encoded in the
    /// state's name.
    pub fn for_state(state: &str) -> Option<Self> {
        decode_state_name(state).map(|c| StateCheckFunction::new(state, &c))
    }
}

/// Evaluates a state check function against a scene.
pub fn state_check(scf: &StateCheckFunction, scene: &SceneSnapshot) -> Result<bool, StateError> {
    if scene.len() != scf.predicates.len() {
        return Err(StateError::LengthMismatch { expected: scf.predicates.len(), found: scene.len() });
    }
    Ok(scf.predicates.iter().all(|p| p.holds(scene)))
}

/// Per-branch view of the fact encoding: effective fact count and the
/// configuration of every state, when the branch is decodable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchModel {
    branch: String,
    fact_count: Option<usize>,
    configs: Option<Vec<(String, FactConfig)>>,
}

impl BranchModel {
    pub fn new(branch: &StateBranch) -> Self {
        let decoded: Option<Vec<(String, FactConfig)>> = branch
            .state_names()
            .map(|s| decode_state_name(s).map(|c| (s.to_string(), c)))
            .collect();
        let common_len = decoded.as_ref().and_then(|d| {
            let first = d.first()?.1.len();
            d.iter().all(|(_, c)| c.len() == first).then_some(first)
        });
        let fact_count = branch.header.num_facts.or(common_len);
        let configs = match (decoded, fact_count) {
            (Some(d), Some(n)) if d.iter().all(|(_, c)| c.len() == n) => Some(d),
            _ => None,
        };
        BranchModel { branch: branch.name().to_string(), fact_count, configs }
    }

    pub fn branch(&self) -> &str {
        &self.branch
    }

    /// `NUM_FACTS` if declared, otherwise the common length of the encoded
    /// configurations.
    pub fn fact_count(&self) -> Option<usize> {
        self.fact_count
    }

    /// True when every state name encodes a configuration of the effective
    /// fact count, which is what scene identification needs.
    pub fn is_decodable(&self) -> bool {
        self.configs.is_some()
    }

    pub fn config_of(&self, state: &str) -> Option<&FactConfig> {
        self.configs.as_ref()?.iter().find(|(s, _)| s == state).map(|(_, c)| c)
    }

    pub fn state_with(&self, config: &FactConfig) -> Option<&str> {
        self.configs.as_ref()?.iter().find(|(_, c)| c == config).map(|(s, _)| s.as_str())
    }

    pub fn check_function(&self, state: &str) -> Option<StateCheckFunction> {
        self.config_of(state).map(|c| StateCheckFunction::new(state, c))
    }

    /// The state whose configuration equals the scene, or `None` when no state
    /// matches or any fact is unknown.
    pub fn identify(&self, scene: &SceneSnapshot) -> Result<Option<&str>, StateError> {
        let configs = self.configs.as_ref().ok_or_else(|| StateError::NotDecodableBranch(self.branch.clone()))?;
        if scene.branch != self.branch {
            return Err(StateError::BranchMismatch { expected: self.branch.clone(), found: scene.branch.clone() });
        }
        let n = self.fact_count.unwrap_or(0);
        if scene.len() != n {
            return Err(StateError::LengthMismatch { expected: n, found: scene.len() });
        }
        let Some(config) = scene.config() else { return Ok(None) };
        Ok(configs.iter().find(|(_, c)| *c == config).map(|(s, _)| s.as_str()))
    }
}

/// Identifies the current state of `branch` from a scene.
pub fn identify_state(branch: &StateBranch, scene: &SceneSnapshot) -> Result<Option<String>, StateError> {
    BranchModel::new(branch).identify(scene).map(|s| s.map(str::to_string))
}

/// Value of fact `fact_index` of `base` as driven by its sub-branch: `'1'`
/// when the sub-branch scene identifies the sub-branch's activating state,
/// `'0'` otherwise.
pub fn hierarchical_fact(
    doc: &SmslDocument,
    base: &str,
    fact_index: usize,
    sub_scene: &SceneSnapshot,
) -> Result<char, StateError> {
    let base_branch = doc.branch(base).ok_or_else(|| StateError::UnknownBranch(base.to_string()))?;
    let sub_name = base_branch
        .header
        .sub_sbs
        .iter()
        .find(|(_, &i)| i == fact_index)
        .map(|(name, _)| name)
        .ok_or_else(|| StateError::NoSubBranch { base: base.to_string(), fact_index })?;
    let sub = doc.branch(sub_name).ok_or_else(|| StateError::UnknownBranch(sub_name.clone()))?;
    let model = BranchModel::new(sub);
    let current = model.identify(sub_scene)?;
    let active = current.is_some() && current == sub.effective_activating();
    Ok(if active { '1' } else { '0' })
}

/// Replaces every sub-branch-driven fact of `base_scene` with the value its
/// sub-branch produces. Sub-branches without a scene in `sub_scenes` leave
/// the corresponding fact unknown.
pub fn resolve_hierarchical_scene(
    doc: &SmslDocument,
    base_scene: &SceneSnapshot,
    sub_scenes: &[SceneSnapshot],
) -> Result<SceneSnapshot, StateError> {
    let base = doc
        .branch(&base_scene.branch)
        .ok_or_else(|| StateError::UnknownBranch(base_scene.branch.clone()))?;
    let mut resolved = base_scene.clone();
    for (sub, &index) in &base.header.sub_sbs {
        if index >= resolved.values.len() {
            return Err(StateError::LengthMismatch { expected: index + 1, found: resolved.values.len() });
        }
        resolved.values[index] = match sub_scenes.iter().find(|s| &s.branch == sub) {
            Some(scene) => Some(hierarchical_fact(doc, base.name(), index, scene)?),
            None => None,
        };
    }
    Ok(resolved)
}
