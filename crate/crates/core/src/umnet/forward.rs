use rand::Rng;

use super::params::{dot, UmParams};
use super::{Marginaliser, UmError};
use crate::bn::Assignment;
use crate::encoding::EvidenceEncoding;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activations of each trunk layer.
    pub trunk_pre: Vec<Vec<f64>>,
    /// ReLU outputs of each trunk layer; the last one is the embedding.
    pub trunk_post: Vec<Vec<f64>>,
    /// Per type, pre-activations of each head layer (empty for absent types).
    pub head_pre: Vec<Vec<Vec<f64>>>,
    /// Per type, ReLU outputs of each head layer before dropout.
    pub head_post: Vec<Vec<Vec<f64>>>,
    /// Per type, multiplicative dropout mask on the last head layer.
    pub dropout_masks: Vec<Option<Vec<f64>>>,
    /// Per type, the head output fed to the node rows (after dropout).
    pub head_out: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn embedding(&self) -> &[f64] {
        self.trunk_post.last().expect("trunk is never empty")
    }
}

#[inline]
fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Logistic function kept strictly inside `(0, 1)`.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Mean binary cross-entropy over nodes, with clamped probabilities.
pub fn bce_loss(probs: &[f64], target: &Assignment) -> f64 {
    assert_eq!(probs.len(), target.len(), "bce length mismatch");
    let total: f64 = probs
        .iter()
        .zip(target.values())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

impl Marginaliser {
    fn check_input(&self, input: &EvidenceEncoding) -> Result<(), UmError> {
        let expected = 2 * self.n_nodes();
        if input.width() != expected {
            return Err(UmError::DimensionMismatch {
                expected,
                got: input.width(),
            });
        }
        Ok(())
    }

    fn present_types(&self) -> Vec<bool> {
        let mut present = vec![false; self.config.type_cap];
        for &t in &self.node_types {
            present[t - 1] = true;
        }
        present
    }

    /// Full forward pass. In training mode with a positive dropout rate each
    /// unit of every head's last layer is kept with probability `1 - rate`
    /// and scaled by `1 / (1 - rate)`; `rng` must then be supplied.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &EvidenceEncoding,
        mode: Mode,
        rng: Option<&mut R>,
    ) -> Result<ForwardTrace, UmError> {
        self.check_input(input)?;
        let rate = self.config.dropout_rate;
        let present = self.present_types();
        let masks = if mode == Mode::Train && rate > 0.0 {
            let rng = rng.ok_or(UmError::MissingRng)?;
            let width = *self.config.head_hidden.last().expect("validated");
            let keep = 1.0 - rate;
            present
                .iter()
                .map(|&p| {
                    p.then(|| {
                        (0..width)
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect()
                    })
                })
                .collect()
        } else {
            vec![None; self.config.type_cap]
        };
        Ok(self.forward_with_masks(input, masks))
    }

    /// Forward pass with explicit dropout masks (`None` = no dropout for that type).
    pub fn forward_with_masks(
        &self,
        input: &EvidenceEncoding,
        dropout_masks: Vec<Option<Vec<f64>>>,
    ) -> ForwardTrace {
        let p = &self.params;
        let x = input.to_input();
        let mut trunk_pre = Vec::with_capacity(p.trunk.len());
        let mut trunk_post = Vec::with_capacity(p.trunk.len());
        let mut a = x.clone();
        for layer in &p.trunk {
            let z = layer.affine(&a);
            let mut h = z.clone();
            relu_in_place(&mut h);
            trunk_pre.push(z);
            trunk_post.push(h.clone());
            a = h;
        }
        let present = self.present_types();
        let mut head_pre = vec![Vec::new(); self.config.type_cap];
        let mut head_post = vec![Vec::new(); self.config.type_cap];
        let mut head_out = vec![Vec::new(); self.config.type_cap];
        for t in 0..self.config.type_cap {
            if !present[t] {
                continue;
            }
            let mut h = a.clone();
            for layer in &p.heads[t] {
                let z = layer.affine(&h);
                h = z.clone();
                relu_in_place(&mut h);
                head_pre[t].push(z);
                head_post[t].push(h.clone());
            }
            if let Some(mask) = &dropout_masks[t] {
                h.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
            head_out[t] = h;
        }
        let logits: Vec<f64> = self
            .node_types
            .iter()
            .enumerate()
            .map(|(i, &t)| p.output.bias[i] + dot(p.output.row(i), &head_out[t - 1]))
            .collect();
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        ForwardTrace {
            input: x,
            trunk_pre,
            trunk_post,
            head_pre,
            head_post,
            dropout_masks,
            head_out,
            logits,
            probs,
        }
    }

    /// Eval-mode marginals `UM(x)`; a pure function of the weights and input.
    pub fn predict(&self, input: &EvidenceEncoding) -> Result<Vec<f64>, UmError> {
        self.check_input(input)?;
        let p = &self.params;
        let mut a = input.to_input();
        let mut buf = Vec::new();
        for layer in &p.trunk {
            layer.affine_into(&a, &mut buf);
            relu_in_place(&mut buf);
            std::mem::swap(&mut a, &mut buf);
        }
        let present = self.present_types();
        let mut head_out = vec![Vec::new(); self.config.type_cap];
        for t in 0..self.config.type_cap {
            if !present[t] {
                continue;
            }
            let mut h = a.clone();
            for layer in &p.heads[t] {
                layer.affine_into(&h, &mut buf);
                relu_in_place(&mut buf);
                std::mem::swap(&mut h, &mut buf);
            }
            head_out[t] = h;
        }
        Ok(self
            .node_types
            .iter()
            .enumerate()
            .map(|(i, &t)| sigmoid(p.output.bias[i] + dot(p.output.row(i), &head_out[t - 1])))
            .collect())
    }

    /// Eval-mode activation of the embedding layer.
    pub fn extract_embedding(&self, input: &EvidenceEncoding) -> Result<Vec<f64>, UmError> {
        self.check_input(input)?;
        let mut a = input.to_input();
        for layer in &self.params.trunk {
            a = layer.affine(&a);
            relu_in_place(&mut a);
        }
        Ok(a)
    }

    /// Exact gradient of `bce_loss(trace.probs, target)`.
    pub fn backward(&self, trace: &ForwardTrace, target: &Assignment) -> UmParams {
        let mut grads = self.params.zeros_like();
        self.accumulate_backward(trace, target, 1.0, &mut grads);
        grads
    }

    /// Adds `scale * dL/dθ` into `grads`. Head gradients of a type collect the
    /// contributions of every node of that type.
    pub fn accumulate_backward(
        &self,
        trace: &ForwardTrace,
        target: &Assignment,
        scale: f64,
        grads: &mut UmParams,
    ) {
        let soft: Vec<f64> = target.values().iter().map(|&v| v as u8 as f64).collect();
        self.accumulate_backward_soft(trace, &soft, scale, grads);
    }

    /// As [`Self::accumulate_backward`] with targets in `[0, 1]`.
    pub fn accumulate_backward_soft(
        &self,
        trace: &ForwardTrace,
        target: &[f64],
        scale: f64,
        grads: &mut UmParams,
    ) {
        let n = self.n_nodes();
        let p = &self.params;
        let type_cap = self.config.type_cap;
        let head_width = p.output.inputs;
        let mut d_head_out = vec![vec![0.0; head_width]; type_cap];
        for i in 0..n {
            let prob = trace.probs[i];
            // The clamp is flat outside its range, so the gradient vanishes there.
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&prob) {
                continue;
            }
            let g = scale * (prob - target[i]) / n as f64;
            let ty = self.node_types[i] - 1;
            grads.output.bias[i] += g;
            let row = &mut grads.output.weights[i * head_width..(i + 1) * head_width];
            for (gw, &h) in row.iter_mut().zip(&trace.head_out[ty]) {
                *gw += g * h;
            }
            for (d, &w) in d_head_out[ty].iter_mut().zip(p.output.row(i)) {
                *d += g * w;
            }
        }

        let embedding = trace.embedding();
        let mut d_embedding = vec![0.0; embedding.len()];
        for ty in 0..type_cap {
            if trace.head_pre[ty].is_empty() {
                continue;
            }
            let mut d = std::mem::take(&mut d_head_out[ty]);
            if let Some(mask) = &trace.dropout_masks[ty] {
                d.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
            for l in (0..p.heads[ty].len()).rev() {
                for (v, &z) in d.iter_mut().zip(&trace.head_pre[ty][l]) {
                    if z <= 0.0 {
                        *v = 0.0;
                    }
                }
                let x = if l == 0 {
                    embedding
                } else {
                    &trace.head_post[ty][l - 1]
                };
                d = p.heads[ty][l]
                    .backprop(x, &d, &mut grads.heads[ty][l], true)
                    .expect("input gradient requested");
            }
            d_embedding.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        }

        let mut d = d_embedding;
        for l in (0..p.trunk.len()).rev() {
            for (v, &z) in d.iter_mut().zip(&trace.trunk_pre[l]) {
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
            let x = if l == 0 {
                &trace.input
            } else {
                &trace.trunk_post[l - 1]
            };
            match p.trunk[l].backprop(x, &d, &mut grads.trunk[l], l > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
    }
}
