use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::forward::{bce_loss, Mode};
use super::params::UmParams;
use super::{Marginaliser, UmConfig, UmError};
use crate::bn::{ancestral_sample, BayesNet};
use crate::encoding::TrainingPair;
use crate::rng;

/// Samples per parallel work unit; fixed so gradients never depend on the thread count.
const CHUNK: usize = 8;

/// Exponential smoothing factor of the reported loss curve.
const SMOOTHING: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Marginaliser,
    /// Mean batch loss at each step.
    pub losses: Vec<f64>,
    /// Bias-corrected exponential moving average of `losses`.
    pub smoothed: Vec<f64>,
    pub steps: u64,
}

impl TrainOutcome {
    /// CSV `step,loss` of the smoothed curve.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (k, l) in self.smoothed.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, l));
        }
        out
    }
}

fn smooth(losses: &[f64]) -> Vec<f64> {
    let mut ema = 0.0;
    let mut weight = 0.0;
    losses
        .iter()
        .map(|&l| {
            ema = (1.0 - SMOOTHING) * ema + SMOOTHING * l;
            weight = (1.0 - SMOOTHING) * weight + SMOOTHING;
            ema / weight
        })
        .collect()
}

/// Gradient of the mean loss over the batch items `first..first+len`, where
/// `make(k)` yields item `k` and its dropout stream.
fn batch_gradient(
    model: &Marginaliser,
    first: u64,
    len: usize,
    make: impl Fn(u64) -> (TrainingPair, rng::StreamRng) + Sync,
) -> (UmParams, f64) {
    let chunks: Vec<(UmParams, f64)> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut grads = model.params.zeros_like();
            let mut loss = 0.0;
            for k in c * CHUNK..((c + 1) * CHUNK).min(len) {
                let (pair, mut r) = make(first + k as u64);
                let trace = model
                    .forward(&pair.input, Mode::Train, Some(&mut r))
                    .expect("training input matches the model");
                loss += bce_loss(&trace.probs, &pair.target);
                model.accumulate_backward(&trace, &pair.target, 1.0 / len as f64, &mut grads);
            }
            (grads, loss)
        })
        .collect();
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for (g, l) in &chunks {
        total.add_assign(g);
        loss += l;
    }
    (total, loss / len as f64)
}

/// Trains a freshly initialised marginaliser for `steps` Adam steps. Each step
/// draws `batch_size` ancestral samples, masks them, and descends the mean
/// BCE. Item `k` of the stream uses random stream `k`, so the run is
/// reproducible from `config.seed` alone.
pub fn train_stream(net: &BayesNet, config: &UmConfig, steps: u64) -> Result<TrainOutcome, UmError> {
    let config = config.for_net(net);
    let mut model = Marginaliser::init(&config, &net.depth_types())?;
    let mut state = AdamState::new(&model.params);
    let seed = rng::derive_seed(config.seed, "umnet-train");
    let batch = config.batch_size;
    let mut losses = Vec::with_capacity(steps as usize);
    for step in 0..steps {
        let (grads, loss) = batch_gradient(&model, step * batch as u64, batch, |k| {
            let mut r = rng::stream(seed, k);
            let sample = ancestral_sample(net, &mut r);
            let pair = config.masking.apply(&sample, &mut r);
            (pair, r)
        });
        adam_step(&mut model.params, &grads, &mut state, &config.adam);
        losses.push(loss);
    }
    debug_assert!(model.params.all_finite());
    Ok(TrainOutcome {
        model,
        smoothed: smooth(&losses),
        losses,
        steps,
    })
}

/// One Adam step on a fixed batch; returns the batch loss before the update.
pub fn train_on_pairs(
    model: &mut Marginaliser,
    state: &mut AdamState,
    pairs: &[TrainingPair],
    dropout_seed: u64,
) -> f64 {
    let step = state.step;
    let (grads, loss) = batch_gradient(model, 0, pairs.len(), |k| {
        (
            pairs[k as usize].clone(),
            rng::stream(dropout_seed, step * pairs.len() as u64 + k),
        )
    });
    let hyper = model.config().adam;
    adam_step(&mut model.params, &grads, state, &hyper);
    loss
}
