//! Importance sampling for posterior marginals.
//!
//! Four proposals share one weighting discipline (log space throughout):
//!
//! * likelihood weighting: unobserved nodes from their CPT conditional;
//! * independent UM: every unobserved node from one fixed marginal vector;
//! * sequential UM: nodes in topological order, each from the marginaliser
//!   re-evaluated on the evidence plus every value drawn so far;
//! * the β mixture `(1 - β)·UM + β·CPT` of the sequential proposal.
//!
//! Sample `j` always draws from random stream `j`, so a run is reproducible
//! from its seed regardless of how many threads execute it.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{
    enumerate_posterior, log_bernoulli, Assignment, BayesNet, BnError, Evidence, NodeId,
};
use crate::encoding::{encode, EvidenceEncoding};
use crate::rng;
use crate::umnet::{Marginaliser, UmError};

/// Marginaliser probabilities are clamped to `[FLOOR, 1 - FLOOR]` before use
/// as a proposal so the proposal never drops support the target has.
pub const PROPOSAL_FLOOR: f64 = 1e-6;

/// Samples per parallel work unit.
const CHUNK: usize = 256;

/// Upper bound on cached marginal vectors per work unit, in floats.
const CACHE_FLOATS: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Network(#[from] BnError),
    #[error(transparent)]
    Model(#[from] UmError),
    #[error("every importance weight is zero: the evidence is impossible under all drawn samples")]
    AllWeightsZero,
    #[error("beta must lie in [0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("at least one sample is required")]
    NoSamples,
    #[error("method {0} needs a trained marginaliser")]
    MissingModel(&'static str),
    #[error("marginal model covers {got} nodes, network has {expected}")]
    ModelSize { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalVariant {
    Prior,
    UmIndependent,
    UmSequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalKind {
    pub variant: ProposalVariant,
    /// Weight on the prior conditional in the sequential mixture.
    pub beta: f64,
}

/// Samples with their log importance weights; `-inf` encodes weight zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedSampleSet {
    pub samples: Vec<Assignment>,
    pub log_weights: Vec<f64>,
}

impl WeightedSampleSet {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    fn max_log_weight(&self) -> Result<f64, InferError> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .filter(|w| w.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            Err(InferError::AllWeightsZero)
        } else {
            Ok(max)
        }
    }

    /// Weights divided by the largest one, so the largest is exactly 1.
    pub fn relative_weights(&self) -> Result<Vec<f64>, InferError> {
        let max = self.max_log_weight()?;
        Ok(self.log_weights.iter().map(|&w| (w - max).exp()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub marginals: Vec<f64>,
    /// `None` for the single forward-pass estimate.
    pub ess: Option<f64>,
    pub m: usize,
    pub proposal: Option<ProposalKind>,
    pub wall_time: f64,
}

/// Things that map an evidence state to per-node marginals.
pub trait MarginalModel: Sync {
    fn node_count(&self) -> usize;
    fn marginals(&self, state: &EvidenceEncoding) -> Vec<f64>;
}

impl MarginalModel for Marginaliser {
    fn node_count(&self) -> usize {
        self.n_nodes()
    }

    fn marginals(&self, state: &EvidenceEncoding) -> Vec<f64> {
        self.predict(state).expect("state width checked against the network")
    }
}

/// Exact conditionals by enumeration; the ideal marginaliser for small nets.
pub struct ExactConditionals<'a> {
    pub net: &'a BayesNet,
}

impl MarginalModel for ExactConditionals<'_> {
    fn node_count(&self) -> usize {
        self.net.len()
    }

    fn marginals(&self, state: &EvidenceEncoding) -> Vec<f64> {
        match enumerate_posterior(self.net, &state.to_evidence()) {
            Ok(post) => post.marginals,
            // Unreachable states get weight zero whatever is proposed.
            Err(_) => vec![0.5; self.net.len()],
        }
    }
}

struct CachedModel<'a, M: MarginalModel + ?Sized> {
    model: &'a M,
    cache: HashMap<EvidenceEncoding, Vec<f64>>,
    capacity: usize,
}

impl<'a, M: MarginalModel + ?Sized> CachedModel<'a, M> {
    fn new(model: &'a M) -> Self {
        CachedModel {
            model,
            cache: HashMap::new(),
            capacity: (CACHE_FLOATS / model.node_count().max(1)).max(16),
        }
    }

    fn prob_one(&mut self, state: &EvidenceEncoding, node: usize) -> f64 {
        if let Some(v) = self.cache.get(state) {
            return v[node];
        }
        if self.cache.len() >= self.capacity {
            self.cache.clear();
        }
        let v = self.model.marginals(state);
        let p = v[node];
        self.cache.insert(state.clone(), v);
        p
    }
}

#[inline]
fn floor_prob(p: f64) -> f64 {
    p.clamp(PROPOSAL_FLOOR, 1.0 - PROPOSAL_FLOOR)
}

fn check_inputs(net: &BayesNet, evidence: &Evidence, m: usize) -> Result<(), InferError> {
    evidence.check(net.len())?;
    if m == 0 {
        return Err(InferError::NoSamples);
    }
    Ok(())
}

fn check_model<M: MarginalModel + ?Sized>(net: &BayesNet, model: &M) -> Result<(), InferError> {
    if model.node_count() != net.len() {
        return Err(InferError::ModelSize {
            expected: net.len(),
            got: model.node_count(),
        });
    }
    Ok(())
}

/// Draws `m` samples in fixed chunks; `draw(j, rng, scratch)` produces sample `j`.
fn sample_set<S, F>(m: usize, seed: u64, scratch: impl Fn() -> S + Sync, draw: F) -> Result<WeightedSampleSet, InferError>
where
    F: Fn(&mut rng::StreamRng, &mut S) -> (Assignment, f64) + Sync,
{
    let seed = rng::derive_seed(seed, "importance-sampling");
    let chunks: Vec<Vec<(Assignment, f64)>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = scratch();
            (c * CHUNK..((c + 1) * CHUNK).min(m))
                .map(|j| draw(&mut rng::stream(seed, j as u64), &mut s))
                .collect()
        })
        .collect();
    let mut set = WeightedSampleSet {
        samples: Vec::with_capacity(m),
        log_weights: Vec::with_capacity(m),
    };
    for (a, w) in chunks.into_iter().flatten() {
        set.samples.push(a);
        set.log_weights.push(w);
    }
    set.max_log_weight()?;
    Ok(set)
}

/// Likelihood weighting: observed nodes are clamped and contribute their CPT
/// likelihood to the weight; unobserved nodes are drawn from their CPT.
pub fn likelihood_weighting(
    net: &BayesNet,
    evidence: &Evidence,
    m: usize,
    seed: u64,
) -> Result<WeightedSampleSet, InferError> {
    check_inputs(net, evidence, m)?;
    let observed = evidence.to_dense(net.len());
    sample_set(m, seed, || (), |r, _| {
        let mut values = vec![false; net.len()];
        let mut log_w = 0.0;
        for i in 0..net.len() {
            let p = net.conditional_prob_one(NodeId(i), &values);
            match observed[i] {
                Some(v) => {
                    values[i] = v;
                    log_w += log_bernoulli(p, v);
                }
                None => values[i] = r.gen::<f64>() < p,
            }
        }
        (Assignment::new(values), log_w)
    })
}

/// Sequential proposal: node `i` is drawn with probability
/// `(1 - beta)·floor(UM(x̃_{S∪O})_i) + beta·P(X_i = 1 | sampled parents)` and
/// the weight accumulates `log(P_i / Q_i)`; observed nodes contribute `log P_i`.
pub fn sequential_is<M: MarginalModel + ?Sized>(
    net: &BayesNet,
    evidence: &Evidence,
    m: usize,
    model: &M,
    beta: f64,
    seed: u64,
) -> Result<WeightedSampleSet, InferError> {
    check_inputs(net, evidence, m)?;
    check_model(net, model)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(InferError::InvalidBeta(beta));
    }
    let observed = evidence.to_dense(net.len());
    let start = encode(evidence, net.len());
    sample_set(m, seed, || CachedModel::new(model), |r, cache| {
        let mut values = vec![false; net.len()];
        let mut state = start.clone();
        let mut log_w = 0.0;
        for i in 0..net.len() {
            let p = net.conditional_prob_one(NodeId(i), &values);
            if let Some(v) = observed[i] {
                values[i] = v;
                log_w += log_bernoulli(p, v);
                continue;
            }
            let q = if beta == 1.0 {
                p
            } else {
                let um = floor_prob(cache.prob_one(&state, i));
                (1.0 - beta) * um + beta * p
            };
            let x = r.gen::<f64>() < q;
            values[i] = x;
            state.observe(NodeId(i), x);
            log_w += log_bernoulli(p, x) - log_bernoulli(q, x);
        }
        (Assignment::new(values), log_w)
    })
}

/// Sequential UM-IS with a trained marginaliser.
pub fn sequential_um_is(
    net: &BayesNet,
    evidence: &Evidence,
    m: usize,
    model: &Marginaliser,
    beta: f64,
    seed: u64,
) -> Result<WeightedSampleSet, InferError> {
    model.check_net(net)?;
    sequential_is(net, evidence, m, model, beta, seed)
}

/// Independent proposal: unobserved node `i` is drawn from `marginals[i]`
/// (floored) regardless of the other draws.
pub fn independent_is(
    net: &BayesNet,
    evidence: &Evidence,
    m: usize,
    marginals: &[f64],
    seed: u64,
) -> Result<WeightedSampleSet, InferError> {
    check_inputs(net, evidence, m)?;
    if marginals.len() != net.len() {
        return Err(InferError::ModelSize {
            expected: net.len(),
            got: marginals.len(),
        });
    }
    let observed = evidence.to_dense(net.len());
    let q: Vec<f64> = marginals.iter().map(|&p| floor_prob(p)).collect();
    sample_set(m, seed, || (), |r, _| {
        let mut values = vec![false; net.len()];
        let mut log_w = 0.0;
        for i in 0..net.len() {
            let p = net.conditional_prob_one(NodeId(i), &values);
            match observed[i] {
                Some(v) => {
                    values[i] = v;
                    log_w += log_bernoulli(p, v);
                }
                None => {
                    let x = r.gen::<f64>() < q[i];
                    values[i] = x;
                    log_w += log_bernoulli(p, x) - log_bernoulli(q[i], x);
                }
            }
        }
        (Assignment::new(values), log_w)
    })
}

/// Naive UM-IS: one forward pass on the evidence, then independent draws.
pub fn naive_um_is(
    net: &BayesNet,
    evidence: &Evidence,
    m: usize,
    model: &Marginaliser,
    seed: u64,
) -> Result<WeightedSampleSet, InferError> {
    model.check_net(net)?;
    evidence.check(net.len())?;
    let q = model.predict(&encode(evidence, net.len()))?;
    independent_is(net, evidence, m, &q, seed)
}

/// Per-node weight factors `P_i / Q_i` of one sample under an independent
/// proposal (observed nodes have `Q_i = 1`).
pub fn independent_weight_factors(
    net: &BayesNet,
    evidence: &Evidence,
    marginals: &[f64],
    sample: &Assignment,
) -> Vec<f64> {
    (0..net.len())
        .map(|i| {
            let p_one = net.conditional_prob_one(NodeId(i), sample.values());
            let x = sample.get(NodeId(i));
            let p = if x { p_one } else { 1.0 - p_one };
            if evidence.contains(NodeId(i)) {
                p
            } else {
                let q = floor_prob(marginals[i]);
                p / if x { q } else { 1.0 - q }
            }
        })
        .collect()
}

/// Effective sample size `(Σw)² / Σw²`, computed after subtracting the
/// largest log-weight.
pub fn ess(set: &WeightedSampleSet) -> Result<f64, InferError> {
    ess_from_log_weights(&set.log_weights)
}

pub fn ess_from_log_weights(log_weights: &[f64]) -> Result<f64, InferError> {
    let set = WeightedSampleSet {
        samples: Vec::new(),
        log_weights: log_weights.to_vec(),
    };
    let w = set.relative_weights()?;
    let m = w.len() as f64;
    let mean = w.iter().sum::<f64>() / m;
    // (Σw)² / Σw² rewritten as M / (1 + CV²) with the squared coefficient
    // of variation taken from deviations, so weights that agree to within
    // rounding give exactly M.
    let cv2 = w.iter().map(|x| ((x - mean) / mean).powi(2)).sum::<f64>() / m;
    Ok((m / (1.0 + cv2)).clamp(1.0, m))
}

/// Self-normalised estimate of every marginal; observed nodes report their
/// evidence bit exactly.
pub fn estimate_marginals(
    set: &WeightedSampleSet,
    evidence: &Evidence,
    proposal: Option<ProposalKind>,
) -> Result<InferenceResult, InferError> {
    let Some(first) = set.samples.first() else {
        return Err(InferError::NoSamples);
    };
    let n = first.len();
    evidence.check(n)?;
    let w = set.relative_weights()?;
    let total: f64 = w.iter().sum();
    let mut numer = vec![0.0; n];
    for (sample, &wj) in set.samples.iter().zip(&w) {
        if wj == 0.0 {
            continue;
        }
        for (acc, &v) in numer.iter_mut().zip(sample.values()) {
            if v {
                *acc += wj;
            }
        }
    }
    let marginals = numer
        .iter()
        .enumerate()
        .map(|(i, &num)| match evidence.get(NodeId(i)) {
            Some(v) => v as u8 as f64,
            None => (num / total).clamp(0.0, 1.0),
        })
        .collect();
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    Ok(InferenceResult {
        marginals,
        ess: Some(total * total / sum_sq),
        m: set.len(),
        proposal,
        wall_time: 0.0,
    })
}

/// Single eval-mode forward pass; observed nodes overwritten by their bits.
pub fn um_direct(model: &Marginaliser, evidence: &Evidence) -> Result<InferenceResult, InferError> {
    let started = Instant::now();
    evidence.check(model.n_nodes())?;
    let mut marginals = model.predict(&encode(evidence, model.n_nodes()))?;
    for (id, v) in evidence.iter() {
        marginals[id.0] = v as u8 as f64;
    }
    Ok(InferenceResult {
        marginals,
        ess: None,
        m: 0,
        proposal: None,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Inference methods exposed to the command line and the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Prior,
    Um,
    UmNaive,
    UmSeq,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Prior => "prior",
            Method::Um => "um",
            Method::UmNaive => "um-naive",
            Method::UmSeq => "um-seq",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [Method::Prior, Method::Um, Method::UmNaive, Method::UmSeq]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What to run: the method plus its sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub beta: f64,
}

/// Runs one inference request end to end and times it.
pub fn run_method(
    net: &BayesNet,
    model: Option<&Marginaliser>,
    evidence: &Evidence,
    spec: MethodSpec,
    m: usize,
    seed: u64,
) -> Result<InferenceResult, InferError> {
    let started = Instant::now();
    let need = |name| model.ok_or(InferError::MissingModel(name));
    let (set, proposal) = match spec.method {
        Method::Um => {
            let model = need("um")?;
            model.check_net(net)?;
            return um_direct(model, evidence);
        }
        Method::Prior => (
            likelihood_weighting(net, evidence, m, seed)?,
            ProposalKind {
                variant: ProposalVariant::Prior,
                beta: 1.0,
            },
        ),
        Method::UmNaive => (
            naive_um_is(net, evidence, m, need("um-naive")?, seed)?,
            ProposalKind {
                variant: ProposalVariant::UmIndependent,
                beta: 0.0,
            },
        ),
        Method::UmSeq => (
            sequential_um_is(net, evidence, m, need("um-seq")?, spec.beta, seed)?,
            ProposalKind {
                variant: ProposalVariant::UmSequential,
                beta: spec.beta,
            },
        ),
    };
    let mut result = estimate_marginals(&set, evidence, Some(proposal))?;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// The exported result document. Wall time is deliberately absent so equal
/// requests produce byte-identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub beta: f64,
    pub m: usize,
    pub ess: Option<f64>,
    pub marginals: Vec<f64>,
    pub seed: u64,
    pub floor: f64,
}

impl ResultRecord {
    pub fn new(result: &InferenceResult, spec: MethodSpec, seed: u64) -> Self {
        ResultRecord {
            method: spec.method.name().to_string(),
            beta: if spec.method == Method::Prior { 1.0 } else { spec.beta },
            m: result.m,
            ess: result.ess,
            marginals: result.marginals.clone(),
            seed,
            floor: PROPOSAL_FLOOR,
        }
    }
}

#[cfg(test)]
mod tests;
