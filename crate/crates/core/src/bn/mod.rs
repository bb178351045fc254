//! Binary Bayesian networks.
//!
//! A [`BayesNet`] is an immutable DAG of binary nodes stored in topological
//! order. Every node carries a full conditional probability table giving
//! `P(node = 1 | parents)` for each parent bit pattern, where parent `k`
//! (in declaration order) contributes bit `k` of the pattern index.
//!
//! Construction always goes through [`validate`], so a `BayesNet` value is
//! valid by construction and can be shared freely across threads.

mod exact;
mod io;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exact::{enumerate_posterior, ExactPosterior, MAX_ENUMERATION_NODES};
pub use io::{LoadError, NetworkFile, NodeRecord};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

/// Largest supported fan-in; tables hold at most `2^12` entries.
pub const MAX_PARENTS: usize = 12;

/// Default depth-type cap used by the marginaliser heads.
pub const DEFAULT_TYPE_CAP: usize = 3;

#[derive(Debug, Error)]
pub enum BnError {
    #[error("invalid network: {0}")]
    Invalid(ValidationReport),
    #[error("type cap must be at least 1, got {0}")]
    InvalidTypeCap(usize),
    #[error("node id {id} out of range for a network of {n} nodes")]
    UnknownNode { id: usize, n: usize },
    #[error("assignment has length {got}, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("network has {n} nodes; exact enumeration supports at most {max}")]
    TooLarge { n: usize, max: usize },
    #[error("evidence has probability zero under the network")]
    ZeroProbabilityEvidence,
}

/// Dense node index in `[0, N)`; equals the node's position in topological order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Conditional probability table of a binary node.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    parent_count: usize,
    table: Vec<f64>,
}

impl Cpt {
    /// Prior of a parentless node.
    pub fn prior(p: f64) -> Self {
        Cpt {
            parent_count: 0,
            table: vec![p],
        }
    }

    /// Table of `2^parent_count` entries; shape and range are checked by [`validate`].
    pub fn new(parent_count: usize, table: Vec<f64>) -> Self {
        Cpt {
            parent_count,
            table,
        }
    }

    pub fn parent_count(&self) -> usize {
        self.parent_count
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `P(node = 1 | parent pattern)`.
    #[inline]
    pub fn prob_one(&self, pattern: usize) -> f64 {
        self.table[pattern]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub parents: Vec<NodeId>,
    pub cpt: Cpt,
    /// 1 for roots, else one more than the deepest parent, clamped to the net's type cap.
    pub depth_type: usize,
}

/// Observed node values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence {
    entries: BTreeMap<NodeId, bool>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, bool)>>(pairs: I) -> Self {
        Evidence {
            entries: pairs.into_iter().map(|(i, v)| (NodeId(i), v)).collect(),
        }
    }

    /// Observes `id`, replacing any previous observation of the same node.
    pub fn insert(&mut self, id: NodeId, value: bool) {
        self.entries.insert(id, value);
    }

    pub fn remove(&mut self, id: NodeId) -> Option<bool> {
        self.entries.remove(&id)
    }

    pub fn get(&self, id: NodeId) -> Option<bool> {
        self.entries.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, bool)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Fails if any id is outside `[0, n)`.
    pub fn check(&self, n: usize) -> Result<(), BnError> {
        match self.entries.keys().find(|id| id.0 >= n) {
            Some(id) => Err(BnError::UnknownNode { id: id.0, n }),
            None => Ok(()),
        }
    }

    /// Per-node view: `Some(value)` for observed nodes.
    pub fn to_dense(&self, n: usize) -> Vec<Option<bool>> {
        let mut dense = vec![None; n];
        for (id, v) in self.iter() {
            dense[id.0] = Some(v);
        }
        dense
    }
}

/// A complete binary assignment to every node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment { values }
    }

    pub fn zeros(n: usize) -> Self {
        Assignment {
            values: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, id: NodeId) -> bool {
        self.values[id.0]
    }

    #[inline]
    pub fn set(&mut self, id: NodeId, value: bool) {
        self.values[id.0] = value;
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(values: Vec<bool>) -> Self {
        Assignment::new(values)
    }
}

/// Immutable, validated binary Bayesian network in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    name: String,
    nodes: Vec<Node>,
    type_cap: usize,
}

impl BayesNet {
    /// Validates `file` and builds the network with depth types clamped at `type_cap`.
    pub fn from_file(file: &NetworkFile, type_cap: usize) -> Result<Self, BnError> {
        if type_cap < 1 {
            return Err(BnError::InvalidTypeCap(type_cap));
        }
        let report = validate(file);
        if !report.is_ok() {
            return Err(BnError::Invalid(report));
        }
        let nodes = file
            .nodes
            .iter()
            .map(|r| Node {
                id: NodeId(r.id),
                name: r.name.clone(),
                parents: r.parents.iter().map(|&p| NodeId(p)).collect(),
                cpt: Cpt::new(r.parents.len(), r.cpt.clone()),
                depth_type: 0,
            })
            .collect();
        let mut net = BayesNet {
            name: file.name.clone(),
            nodes,
            type_cap,
        };
        net.set_depth_types();
        Ok(net)
    }

    /// Builds a network from `(name, parents, cpt)` triples listed in topological order.
    pub fn from_parts<S: Into<String>>(
        name: S,
        parts: Vec<(String, Vec<usize>, Vec<f64>)>,
    ) -> Result<Self, BnError> {
        let file = NetworkFile {
            name: name.into(),
            nodes: parts
                .into_iter()
                .enumerate()
                .map(|(id, (name, parents, cpt))| NodeRecord {
                    id,
                    name,
                    parents,
                    cpt,
                })
                .collect(),
        };
        Self::from_file(&file, DEFAULT_TYPE_CAP)
    }

    fn set_depth_types(&mut self) {
        let mut raw = vec![0usize; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let d = 1 + self.nodes[i]
                .parents
                .iter()
                .map(|p| raw[p.0])
                .max()
                .unwrap_or(0);
            raw[i] = d;
            self.nodes[i].depth_type = d.min(self.type_cap);
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn type_cap(&self) -> usize {
        self.type_cap
    }

    pub fn depth_types(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.depth_type).collect()
    }

    /// Bit pattern of `node`'s parents under `values`.
    #[inline]
    pub fn parent_pattern(&self, node: NodeId, values: &[bool]) -> usize {
        self.nodes[node.0]
            .parents
            .iter()
            .enumerate()
            .fold(0, |acc, (k, p)| acc | ((values[p.0] as usize) << k))
    }

    /// `P(node = 1 | parents)` with parent values read from `values`.
    #[inline]
    pub fn conditional_prob_one(&self, node: NodeId, values: &[bool]) -> f64 {
        self.nodes[node.0]
            .cpt
            .prob_one(self.parent_pattern(node, values))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.0,
                    name: n.name.clone(),
                    parents: n.parents.iter().map(|p| p.0).collect(),
                    cpt: n.cpt.table.clone(),
                })
                .collect(),
        }
    }

    fn check_assignment(&self, assignment: &Assignment) -> Result<(), BnError> {
        if assignment.len() != self.len() {
            return Err(BnError::AssignmentLength {
                expected: self.len(),
                got: assignment.len(),
            });
        }
        Ok(())
    }
}

/// Returns a copy of `net` with depth types recomputed under `cap`.
pub fn assign_depth_types(net: &BayesNet, cap: usize) -> Result<BayesNet, BnError> {
    if cap < 1 {
        return Err(BnError::InvalidTypeCap(cap));
    }
    let mut out = net.clone();
    out.type_cap = cap;
    out.set_depth_types();
    Ok(out)
}

/// Draws one full assignment in topological order, consuming exactly `N` uniforms.
pub fn ancestral_sample<R: Rng + ?Sized>(net: &BayesNet, rng: &mut R) -> Assignment {
    let mut values = vec![false; net.len()];
    for i in 0..net.len() {
        let p = net.conditional_prob_one(NodeId(i), &values);
        let u: f64 = rng.gen();
        values[i] = u < p;
    }
    Assignment::new(values)
}

#[inline]
pub(crate) fn log_bernoulli(p_one: f64, value: bool) -> f64 {
    if value {
        p_one.ln()
    } else {
        (1.0 - p_one).ln()
    }
}

/// `log P(X_id = assignment[id] | parents)`; `-inf` when the CPT rules the value out.
pub fn node_log_likelihood(net: &BayesNet, id: NodeId, assignment: &Assignment) -> f64 {
    let p = net.conditional_prob_one(id, assignment.values());
    log_bernoulli(p, assignment.get(id))
}

/// Sum of node log-likelihoods; `-inf` if any factor is zero.
pub fn joint_log_prob(net: &BayesNet, assignment: &Assignment) -> Result<f64, BnError> {
    net.check_assignment(assignment)?;
    Ok((0..net.len())
        .map(|i| node_log_likelihood(net, NodeId(i), assignment))
        .sum())
}
