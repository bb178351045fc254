//! The universal marginaliser: a feed-forward network mapping an evidence
//! encoding to approximate posterior marginals for every node.
//!
//! Layout: a shared trunk ending in the embedding layer, one head per depth
//! type whose weights are shared by every node of that type, and a per-node
//! output row producing one logit. Hidden layers use ReLU; inverted dropout
//! is applied to the last head layer in training mode only.

mod adam;
mod checkpoint;
mod forward;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{BayesNet, DEFAULT_TYPE_CAP};
use crate::encoding::MaskingScheme;
use crate::rng;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_params, save_params, Checkpoint, CHECKPOINT_VERSION};
pub use forward::{bce_loss, ForwardTrace, Mode, BCE_CLAMP};
pub use params::{Dense, UmParams};
pub use train::{train_on_pairs, train_stream, TrainOutcome};

#[derive(Debug, Error)]
pub enum UmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input has width {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training-mode dropout needs a random stream")]
    MissingRng,
    #[error("network does not match the marginaliser: {0}")]
    NetworkMismatch(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint configuration differs from the requested one: {0}")]
    ConfigMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmConfig {
    pub n_nodes: usize,
    pub embedding_dim: usize,
    pub trunk_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub type_cap: usize,
    /// Dropout on the last hidden layer of each head.
    pub dropout_rate: f64,
    pub adam: AdamHyper,
    pub batch_size: usize,
    pub seed: u64,
    pub masking: MaskingScheme,
}

impl Default for UmConfig {
    fn default() -> Self {
        UmConfig {
            n_nodes: 0,
            embedding_dim: 128,
            trunk_hidden: vec![128],
            head_hidden: vec![64],
            type_cap: DEFAULT_TYPE_CAP,
            dropout_rate: 0.0,
            adam: AdamHyper::default(),
            batch_size: 64,
            seed: 0,
            masking: MaskingScheme::default(),
        }
    }
}

impl UmConfig {
    pub fn validate(&self) -> Result<(), UmError> {
        let bad = |m: &str| Err(UmError::InvalidConfig(m.to_string()));
        if self.n_nodes < 1 {
            return bad("n_nodes must be at least 1");
        }
        if self.embedding_dim < 1 {
            return bad("embedding_dim must be at least 1");
        }
        if self.head_hidden.is_empty() {
            return bad("head_hidden needs at least one hidden layer");
        }
        if self.trunk_hidden.iter().chain(&self.head_hidden).any(|&w| w < 1) {
            return bad("layer widths must be at least 1");
        }
        if self.type_cap < 1 {
            return bad("type_cap must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.epsilon > 0.0)
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
        {
            return bad("adam hyperparameters out of range");
        }
        Ok(())
    }

    /// Copy of `self` sized for `net`.
    pub fn for_net(&self, net: &BayesNet) -> UmConfig {
        UmConfig {
            n_nodes: net.len(),
            type_cap: net.type_cap(),
            ..self.clone()
        }
    }
}

/// A marginaliser: configuration, the node-to-type map and the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginaliser {
    config: UmConfig,
    /// Depth type (1-based) of each node.
    node_types: Vec<usize>,
    pub params: UmParams,
}

impl Marginaliser {
    /// Fan-in scaled uniform initialisation, deterministic in `config.seed`:
    /// hidden layers `U(±sqrt(6/fan_in))`, output rows `U(±sqrt(3/fan_in))`,
    /// biases zero.
    pub fn init(config: &UmConfig, node_types: &[usize]) -> Result<Self, UmError> {
        Self::check_shape(config, node_types)?;
        let mut rng = rng::stream(rng::derive_seed(config.seed, "umnet-init"), 0);
        let mut trunk = Vec::new();
        let mut width = 2 * config.n_nodes;
        for &w in config.trunk_hidden.iter().chain([&config.embedding_dim]) {
            trunk.push(Dense::uniform(width, w, 6.0, &mut rng));
            width = w;
        }
        let heads = (0..config.type_cap)
            .map(|_| {
                let mut width = config.embedding_dim;
                config
                    .head_hidden
                    .iter()
                    .map(|&w| {
                        let d = Dense::uniform(width, w, 6.0, &mut rng);
                        width = w;
                        d
                    })
                    .collect()
            })
            .collect();
        let head_out = *config.head_hidden.last().expect("validated");
        let output = Dense::uniform(head_out, config.n_nodes, 3.0, &mut rng);
        Ok(Marginaliser {
            config: config.clone(),
            node_types: node_types.to_vec(),
            params: UmParams {
                trunk,
                heads,
                output,
            },
        })
    }

    /// Same shapes as [`Self::init`] with every weight and bias zero.
    pub fn zeros(config: &UmConfig, node_types: &[usize]) -> Result<Self, UmError> {
        let mut m = Self::init(config, node_types)?;
        m.params = m.params.zeros_like();
        Ok(m)
    }

    pub fn init_for_net(config: &UmConfig, net: &BayesNet) -> Result<Self, UmError> {
        Self::init(&config.for_net(net), &net.depth_types())
    }

    pub(crate) fn from_parts(
        config: UmConfig,
        node_types: Vec<usize>,
        params: UmParams,
    ) -> Result<Self, UmError> {
        Self::check_shape(&config, &node_types)?;
        let m = Marginaliser {
            config,
            node_types,
            params,
        };
        let expected = Self::init(&m.config, &m.node_types)?.params;
        let same_shape = expected
            .slices()
            .iter()
            .zip(m.params.slices())
            .all(|(a, b)| a.len() == b.len())
            && expected.slices().len() == m.params.slices().len();
        if !same_shape {
            return Err(UmError::Corrupt("parameter shapes do not match the configuration".into()));
        }
        Ok(m)
    }

    fn check_shape(config: &UmConfig, node_types: &[usize]) -> Result<(), UmError> {
        config.validate()?;
        if node_types.len() != config.n_nodes {
            return Err(UmError::InvalidConfig(format!(
                "{} node types for {} nodes",
                node_types.len(),
                config.n_nodes
            )));
        }
        if node_types.iter().any(|&t| t < 1 || t > config.type_cap) {
            return Err(UmError::InvalidConfig(format!(
                "node types must lie in 1..={}",
                config.type_cap
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &UmConfig {
        &self.config
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn n_nodes(&self) -> usize {
        self.config.n_nodes
    }

    /// Fails unless `net` has the node count and depth types this model was built for.
    pub fn check_net(&self, net: &BayesNet) -> Result<(), UmError> {
        if net.len() != self.n_nodes() {
            return Err(UmError::NetworkMismatch(format!(
                "network has {} nodes, marginaliser expects {}",
                net.len(),
                self.n_nodes()
            )));
        }
        if net.depth_types() != self.node_types {
            return Err(UmError::NetworkMismatch("depth types differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
