//! Amortised importance sampling for binary Bayesian networks.
//!
//! A feed-forward marginaliser is trained on masked samples from the network
//! prior and then used as an importance-sampling proposal, with exact
//! enumeration available as ground truth on small networks.

pub mod bn;
pub mod encoding;
pub mod eval;
pub mod graphgen;
pub mod infer;
pub mod rng;
pub mod umnet;
