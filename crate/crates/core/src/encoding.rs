//! Two-slot evidence encoding and the masking schemes that turn prior samples
//! into training pairs.
//!
//! Node `i` owns slots `(2i, 2i + 1)` = `(neg_i, pos_i)`:
//! `(0, 1)` observed positive, `(1, 0)` observed negative, `(0, 0)` unobserved
//! or masked. Training and inference share the same code for "unknown".

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bn::{Assignment, Evidence, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EvidenceEncoding {
    /// Per-node state: `None` unobserved, `Some(v)` observed with value `v`.
    states: Vec<Option<bool>>,
}

impl EvidenceEncoding {
    /// Nothing observed.
    pub fn empty(n: usize) -> Self {
        EvidenceEncoding {
            states: vec![None; n],
        }
    }

    /// Every node observed at its value in `assignment`.
    pub fn full(assignment: &Assignment) -> Self {
        EvidenceEncoding {
            states: assignment.values().iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn from_states(states: Vec<Option<bool>>) -> Self {
        EvidenceEncoding { states }
    }

    /// Number of nodes, `N`.
    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    /// Input dimension, `2N`.
    pub fn width(&self) -> usize {
        2 * self.states.len()
    }

    pub fn state(&self, id: NodeId) -> Option<bool> {
        self.states[id.0]
    }

    pub fn states(&self) -> &[Option<bool>] {
        &self.states
    }

    pub fn observe(&mut self, id: NodeId, value: bool) {
        self.states[id.0] = Some(value);
    }

    pub fn clear(&mut self, id: NodeId) {
        self.states[id.0] = None;
    }

    pub fn observed_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_some()).count()
    }

    /// The `(neg, pos)` pair for a node.
    pub fn slots(&self, id: NodeId) -> (u8, u8) {
        match self.states[id.0] {
            None => (0, 0),
            Some(false) => (1, 0),
            Some(true) => (0, 1),
        }
    }

    /// The `2N` binary input vector.
    pub fn bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width());
        for i in 0..self.states.len() {
            let (neg, pos) = self.slots(NodeId(i));
            out.push(neg);
            out.push(pos);
        }
        out
    }

    /// Writes the `2N` input vector as floats into `out`.
    pub fn write_input(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.width(), "input buffer width");
        for (i, s) in self.states.iter().enumerate() {
            let (neg, pos) = match s {
                None => (0.0, 0.0),
                Some(false) => (1.0, 0.0),
                Some(true) => (0.0, 1.0),
            };
            out[2 * i] = neg;
            out[2 * i + 1] = pos;
        }
    }

    pub fn to_input(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.write_input(&mut out);
        out
    }

    /// Evidence holding every observed slot.
    pub fn to_evidence(&self) -> Evidence {
        Evidence::from_pairs(
            self.states
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|v| (i, v))),
        )
    }
}

/// Encodes `evidence` over `n` nodes. Ids must already be checked against `n`.
pub fn encode(evidence: &Evidence, n: usize) -> EvidenceEncoding {
    EvidenceEncoding {
        states: evidence.to_dense(n),
    }
}

/// A masked input together with the complete sample it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: EvidenceEncoding,
    pub target: Assignment,
}

/// How many and which nodes of a prior sample are hidden from the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingScheme {
    /// Draw `i, j` uniform on `{0..=N}`; hide `min(i, #ones)` of the value-1
    /// nodes and `min(j, #zeros)` of the value-0 nodes.
    #[default]
    SignSplit,
    /// Draw `k` uniform on `{0..=N}` and hide `k` nodes chosen without regard
    /// to their values.
    Uniform,
}

impl MaskingScheme {
    pub fn apply<R: Rng + ?Sized>(self, sample: &Assignment, rng: &mut R) -> TrainingPair {
        match self {
            MaskingScheme::SignSplit => mask_sample(sample, rng),
            MaskingScheme::Uniform => mask_sample_uniform(sample, rng),
        }
    }
}

fn hide_subset<R: Rng + ?Sized>(
    states: &mut [Option<bool>],
    candidates: &[usize],
    count: usize,
    rng: &mut R,
) {
    for k in index::sample(rng, candidates.len(), count) {
        states[candidates[k]] = None;
    }
}

/// Sign-split masking: the proportion of hidden positives and hidden
/// negatives changes from sample to sample.
pub fn mask_sample<R: Rng + ?Sized>(sample: &Assignment, rng: &mut R) -> TrainingPair {
    let n = sample.len();
    let i = rng.gen_range(0..=n);
    let j = rng.gen_range(0..=n);
    mask_with_counts(sample, i, j, rng)
}

/// Hides `min(hide_ones, #ones)` value-1 nodes and `min(hide_zeros, #zeros)`
/// value-0 nodes, each subset chosen uniformly without replacement.
pub fn mask_with_counts<R: Rng + ?Sized>(
    sample: &Assignment,
    hide_ones: usize,
    hide_zeros: usize,
    rng: &mut R,
) -> TrainingPair {
    let n = sample.len();
    let (ones, zeros): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| sample.values()[k]);
    let mut input = EvidenceEncoding::full(sample);
    hide_subset(&mut input.states, &ones, hide_ones.min(ones.len()), rng);
    hide_subset(&mut input.states, &zeros, hide_zeros.min(zeros.len()), rng);
    TrainingPair {
        input,
        target: sample.clone(),
    }
}

/// Value-independent masking: the hidden set does not depend on the sample.
pub fn mask_sample_uniform<R: Rng + ?Sized>(sample: &Assignment, rng: &mut R) -> TrainingPair {
    let n = sample.len();
    let k = rng.gen_range(0..=n);
    let all: Vec<usize> = (0..n).collect();
    let mut input = EvidenceEncoding::full(sample);
    hide_subset(&mut input.states, &all, k, rng);
    TrainingPair {
        input,
        target: sample.clone(),
    }
}
