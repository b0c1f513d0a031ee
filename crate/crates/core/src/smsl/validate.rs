use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{SmslDocument, StateBranch};
use crate::state::decode_state_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FindingCode {
    MissingTarget,
    MissingSubBranch,
    SelfSubBranch,
    CyclicHierarchy,
    FactIndexOutOfRange,
    DuplicateFactBinding,
    MissingInitial,
    MissingActivating,
    DuplicateConfig,
    FactCountMismatch,
    Unreachable,
    EmptyBranch,
    UnknownHeaderField,
    MixedFactCount,
}

impl FindingCode {
    pub fn severity(self) -> Severity {
        use FindingCode::*;
        match self {
            Unreachable | EmptyBranch | UnknownHeaderField | MixedFactCount => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub branch: String,
    /// Dotted path inside the branch, e.g. `State_aaa.Op_1b`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}[{:?}] {}", self.code, self.branch)?;
        if !self.location.is_empty() {
            write!(f, ".{}", self.location)?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn has(&self, code: FindingCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }
}

/// Checks every structural rule of the language. Problems are reported as
/// findings; `ok` is false iff at least one finding is an error.
pub fn validate(doc: &SmslDocument) -> ValidationReport {
    let mut findings = Vec::new();
    for branch in doc.branches() {
        let mut push = |code: FindingCode, location: String, message: String| {
            findings.push(Finding {
                severity: code.severity(),
                code,
                branch: branch.name().to_string(),
                location,
                message,
            })
        };
        check_targets(branch, &mut push);
        check_header(doc, branch, &mut push);
        check_configs(branch, &mut push);
        check_reachability(branch, &mut push);
    }
    check_hierarchy_cycles(doc, &mut findings);
    let ok = findings.iter().all(|f| f.severity != Severity::Error);
    ValidationReport { ok, findings }
}

fn check_targets(branch: &StateBranch, push: &mut impl FnMut(FindingCode, String, String)) {
    if branch.state_count() == 0 {
        push(FindingCode::EmptyBranch, String::new(), "branch declares no states".into());
    }
    for (state, ops) in branch.states() {
        for (op, target) in ops {
            if !branch.contains_state(target) {
                push(
                    FindingCode::MissingTarget,
                    format!("{state}.{op}"),
                    format!("target {target:?} is not a declared state"),
                );
            }
        }
    }
}

fn check_header(doc: &SmslDocument, branch: &StateBranch, push: &mut impl FnMut(FindingCode, String, String)) {
    let h = &branch.header;
    if let Some(initial) = &h.initial {
        if !branch.contains_state(initial) {
            push(FindingCode::MissingInitial, "HEADER.INITIAL".into(), format!("{initial:?} is not a declared state"));
        }
    }
    if let Some(activating) = &h.activating {
        if !branch.contains_state(activating) {
            push(
                FindingCode::MissingActivating,
                "HEADER.ACTIVATING".into(),
                format!("{activating:?} is not a declared state"),
            );
        }
    }
    let mut bound: HashMap<usize, &str> = HashMap::new();
    for (sub, &index) in &h.sub_sbs {
        let location = format!("HEADER.SUB_SBS.{sub}");
        if sub == branch.name() {
            push(FindingCode::SelfSubBranch, location.clone(), "a branch cannot be its own sub-branch".into());
        } else if doc.branch(sub).is_none() {
            push(FindingCode::MissingSubBranch, location.clone(), format!("no branch named {sub:?}"));
        }
        if let Some(n) = h.num_facts {
            if index >= n {
                push(
                    FindingCode::FactIndexOutOfRange,
                    location.clone(),
                    format!("fact index {index} is not below NUM_FACTS {n}"),
                );
            }
        }
        if let Some(other) = bound.insert(index, sub) {
            push(
                FindingCode::DuplicateFactBinding,
                location,
                format!("fact index {index} is already driven by {other:?}"),
            );
        }
    }
    for key in h.extra.keys() {
        push(FindingCode::UnknownHeaderField, format!("HEADER.{key}"), format!("unknown header field {key:?} ignored"));
    }
}

fn check_configs(branch: &StateBranch, push: &mut impl FnMut(FindingCode, String, String)) {
    let decoded: Vec<(&str, Vec<char>)> = branch
        .state_names()
        .filter_map(|s| decode_state_name(s).map(|c| (s, c.into_digits())))
        .collect();

    if let Some(n) = branch.header.num_facts {
        for (state, digits) in &decoded {
            if digits.len() != n {
                push(
                    FindingCode::FactCountMismatch,
                    state.to_string(),
                    format!("name encodes {} facts but NUM_FACTS is {n}", digits.len()),
                );
            }
        }
    } else {
        let lengths: HashSet<usize> = decoded.iter().map(|(_, d)| d.len()).collect();
        if lengths.len() > 1 {
            push(
                FindingCode::MixedFactCount,
                String::new(),
                "state names encode different fact counts; state identification is unavailable".into(),
            );
        }
    }

    let mut seen: HashMap<&[char], &str> = HashMap::new();
    for (state, digits) in &decoded {
        if let Some(first) = seen.insert(digits.as_slice(), state) {
            push(
                FindingCode::DuplicateConfig,
                state.to_string(),
                format!("decodes to the same fact configuration as {first:?}"),
            );
        }
    }
}

fn check_reachability(branch: &StateBranch, push: &mut impl FnMut(FindingCode, String, String)) {
    let Some(start) = branch.effective_initial() else { return };
    if !branch.contains_state(start) {
        return;
    }
    let mut seen: HashSet<&str> = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(state) = queue.pop_front() {
        for target in branch.operations(state).into_iter().flat_map(|ops| ops.values()) {
            if branch.contains_state(target) && seen.insert(target) {
                queue.push_back(target);
            }
        }
    }
    for state in branch.state_names() {
        if !seen.contains(state) {
            push(FindingCode::Unreachable, state.to_string(), format!("not reachable from initial state {start:?}"));
        }
    }
}

fn check_hierarchy_cycles(doc: &SmslDocument, findings: &mut Vec<Finding>) {
    // Depth-first search over base → sub-branch links.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    fn visit<'a>(
        doc: &'a SmslDocument,
        name: &'a str,
        marks: &mut HashMap<&'a str, Mark>,
        cyclic: &mut Vec<&'a str>,
    ) {
        marks.insert(name, Mark::Active);
        if let Some(b) = doc.branch(name) {
            for sub in b.header.sub_sbs.keys() {
                if sub == name || doc.branch(sub).is_none() {
                    continue;
                }
                match marks.get(sub.as_str()).copied().unwrap_or(Mark::Fresh) {
                    Mark::Active => cyclic.push(name),
                    Mark::Fresh => visit(doc, sub, marks, cyclic),
                    Mark::Done => {}
                }
            }
        }
        marks.insert(name, Mark::Done);
    }

    let mut marks = HashMap::new();
    let mut cyclic = Vec::new();
    for name in doc.branch_names() {
        if !marks.contains_key(name) {
            visit(doc, name, &mut marks, &mut cyclic);
        }
    }
    for name in cyclic {
        findings.push(Finding {
            severity: Severity::Error,
            code: FindingCode::CyclicHierarchy,
            branch: name.to_string(),
            location: "HEADER.SUB_SBS".into(),
            message: "sub-branch links form a cycle".into(),
        });
    }
}
