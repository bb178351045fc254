use std::collections::VecDeque;
use std::fmt;

use super::io::NetworkFile;
use super::MAX_PARENTS;

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptyNetwork,
    /// Stored id differs from the node's position in the list.
    IdMismatch { got: usize },
    DanglingParent { parent: usize },
    DuplicateParent { parent: usize },
    TooManyParents { count: usize },
    /// Parent listed at or after the child's own position.
    NonTopologicalOrder { parent: usize },
    /// The node lies on (or downstream of) a directed cycle.
    Cycle,
    CptLengthMismatch { expected: usize, got: usize },
    ProbabilityOutOfRange { entry: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Position of the offending node in the file's node list.
    pub node: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyNetwork => write!(f, "network has no nodes"),
            ViolationKind::IdMismatch { got } => {
                write!(f, "id {got} does not match its position in the node list")
            }
            ViolationKind::DanglingParent { parent } => {
                write!(f, "parent {parent} does not name a node")
            }
            ViolationKind::DuplicateParent { parent } => write!(f, "parent {parent} listed twice"),
            ViolationKind::TooManyParents { count } => {
                write!(f, "{count} parents exceeds the limit of {MAX_PARENTS}")
            }
            ViolationKind::NonTopologicalOrder { parent } => {
                write!(f, "parent {parent} is not listed before the node")
            }
            ViolationKind::Cycle => write!(f, "node is part of a directed cycle"),
            ViolationKind::CptLengthMismatch { expected, got } => {
                write!(f, "cpt has {got} entries, expected {expected}")
            }
            ViolationKind::ProbabilityOutOfRange { entry, value } => {
                write!(f, "cpt entry {entry} = {value} is not a probability")
            }
        }
    }
}

/// Outcome of [`validate`]; empty means the network is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&ViolationKind) -> bool) -> bool {
        self.violations.iter().any(|v| pred(&v.kind))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            match v.node {
                Some(i) => write!(f, "node {i}: {}", v.kind)?,
                None => write!(f, "{}", v.kind)?,
            }
        }
        Ok(())
    }
}

/// Checks every structural and numeric invariant of a network description.
pub fn validate(file: &NetworkFile) -> ValidationReport {
    let n = file.nodes.len();
    let mut violations = Vec::new();
    let mut push = |node: Option<usize>, kind| violations.push(Violation { node, kind });

    if n == 0 {
        push(None, ViolationKind::EmptyNetwork);
    }

    for (pos, rec) in file.nodes.iter().enumerate() {
        let here = Some(pos);
        if rec.id != pos {
            push(here, ViolationKind::IdMismatch { got: rec.id });
        }
        if rec.parents.len() > MAX_PARENTS {
            push(
                here,
                ViolationKind::TooManyParents {
                    count: rec.parents.len(),
                },
            );
        }
        for (k, &p) in rec.parents.iter().enumerate() {
            if rec.parents[..k].contains(&p) {
                push(here, ViolationKind::DuplicateParent { parent: p });
            }
            if p >= n {
                push(here, ViolationKind::DanglingParent { parent: p });
            } else if p >= pos {
                push(here, ViolationKind::NonTopologicalOrder { parent: p });
            }
        }
        if rec.parents.len() <= MAX_PARENTS {
            let expected = 1usize << rec.parents.len();
            if rec.cpt.len() != expected {
                push(
                    here,
                    ViolationKind::CptLengthMismatch {
                        expected,
                        got: rec.cpt.len(),
                    },
                );
            }
        }
        for (entry, &value) in rec.cpt.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                push(here, ViolationKind::ProbabilityOutOfRange { entry, value });
            }
        }
    }

    // Kahn's algorithm over the edges that point at real nodes.
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (pos, rec) in file.nodes.iter().enumerate() {
        let mut seen = Vec::new();
        for &p in rec.parents.iter().filter(|&&p| p < n) {
            if !seen.contains(&p) {
                seen.push(p);
                indegree[pos] += 1;
                children[p].push(pos);
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut visited = vec![false; n];
    while let Some(i) = queue.pop_front() {
        visited[i] = true;
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    for (i, done) in visited.iter().enumerate() {
        if !done {
            push(Some(i), ViolationKind::Cycle);
        }
    }

    ValidationReport { violations }
}
