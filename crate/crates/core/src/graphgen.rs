//! Seeded synthetic layered networks.
//!
//! Layer 1 holds parentless nodes; every node of layer `k > 1` picks between
//! 1 and `max_parents` parents uniformly without replacement from layer
//! `k - 1`. CPT entries are i.i.d. `Beta(α, α)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{BayesNet, BnError, NetworkFile, NodeRecord, DEFAULT_TYPE_CAP, MAX_PARENTS};
use crate::rng;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("nodes_per_layer ({nodes_per_layer}) is smaller than max_parents ({max_parents})")]
    TooFewNodesForParents {
        nodes_per_layer: usize,
        max_parents: usize,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("unknown preset {0:?} (expected s96, s384, s768 or s1536)")]
    UnknownPreset(String),
    #[error(transparent)]
    Network(#[from] BnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub layers: usize,
    pub nodes_per_layer: usize,
    pub max_parents: usize,
    /// α of the symmetric Beta distribution CPT entries are drawn from.
    pub cpt_concentration: f64,
}

impl GenSpec {
    pub fn node_count(&self) -> usize {
        self.layers * self.nodes_per_layer
    }

    fn check(&self) -> Result<(), GenError> {
        if self.layers < 1 || self.nodes_per_layer < 1 {
            return Err(GenError::InvalidSpec(
                "layers and nodes_per_layer must be at least 1".into(),
            ));
        }
        if self.max_parents > MAX_PARENTS {
            return Err(GenError::InvalidSpec(format!(
                "max_parents must be at most {MAX_PARENTS}"
            )));
        }
        if !(self.cpt_concentration > 0.0 && self.cpt_concentration.is_finite()) {
            return Err(GenError::InvalidSpec(
                "cpt_concentration must be positive".into(),
            ));
        }
        if self.nodes_per_layer < self.max_parents {
            return Err(GenError::TooFewNodesForParents {
                nodes_per_layer: self.nodes_per_layer,
                max_parents: self.max_parents,
            });
        }
        Ok(())
    }
}

/// Named specs for the standard synthetic scales: three layers, fan-in at
/// most three, uniform CPT entries; the seed equals the node count.
pub fn preset(name: &str) -> Result<GenSpec, GenError> {
    let per_layer = match name {
        "s96" => 32,
        "s384" => 128,
        "s768" => 256,
        "s1536" => 512,
        _ => return Err(GenError::UnknownPreset(name.to_string())),
    };
    Ok(GenSpec {
        seed: 3 * per_layer as u64,
        layers: 3,
        nodes_per_layer: per_layer,
        max_parents: 3,
        cpt_concentration: 1.0,
    })
}

pub fn generate(spec: &GenSpec) -> Result<BayesNet, GenError> {
    spec.check()?;
    let mut rng = rng::stream(rng::derive_seed(spec.seed, "graphgen"), 0);
    let beta = Beta::new(spec.cpt_concentration, spec.cpt_concentration)
        .map_err(|e| GenError::InvalidSpec(e.to_string()))?;
    let npl = spec.nodes_per_layer;
    let mut nodes = Vec::with_capacity(spec.node_count());
    for layer in 0..spec.layers {
        for k in 0..npl {
            let id = layer * npl + k;
            let parents: Vec<usize> = if layer == 0 || spec.max_parents == 0 {
                Vec::new()
            } else {
                let count = rng.gen_range(1..=spec.max_parents);
                let mut chosen: Vec<usize> = index::sample(&mut rng, npl, count)
                    .into_iter()
                    .map(|j| (layer - 1) * npl + j)
                    .collect();
                chosen.sort_unstable();
                chosen
            };
            let cpt = (0..1usize << parents.len())
                .map(|_| beta.sample(&mut rng))
                .collect();
            nodes.push(NodeRecord {
                id,
                name: format!("L{}_{}", layer + 1, k),
                parents,
                cpt,
            });
        }
    }
    let file = NetworkFile {
        name: format!(
            "synthetic-{}x{}-p{}-a{}-s{}",
            spec.layers, npl, spec.max_parents, spec.cpt_concentration, spec.seed
        ),
        nodes,
    };
    Ok(BayesNet::from_file(&file, DEFAULT_TYPE_CAP)?)
}
