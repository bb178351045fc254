use rand::Rng;

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights uniform on `±sqrt(gain / fan_in)`, biases zero.
    pub(crate) fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let limit = (gain / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// `out = W x + b`.
    pub fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        out.clear();
        out.extend(
            self.bias
                .iter()
                .enumerate()
                .map(|(o, b)| b + dot(self.row(o), x)),
        );
    }

    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.outputs);
        self.affine_into(x, &mut out);
        out
    }

    /// Accumulates the gradient of a layer given `d_out = dL/d(Wx + b)`;
    /// returns `dL/dx` when `want_input` is set.
    pub(crate) fn backprop(
        &self,
        x: &[f64],
        d_out: &[f64],
        grad: &mut Dense,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let mut d_in = if want_input {
            Some(vec![0.0; self.inputs])
        } else {
            None
        };
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (gw, &xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
            if let Some(d) = d_in.as_mut() {
                for (di, &w) in d.iter_mut().zip(self.row(o)) {
                    *di += g * w;
                }
            }
        }
        d_in
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trainable weights of the marginaliser. The same layout doubles as the
/// gradient and optimiser-moment container.
///
/// * `trunk`: `2N -> trunk_hidden... -> embedding_dim`; the last layer is the
///   embedding layer.
/// * `heads[t]`: layers shared by every node of depth type `t + 1`,
///   `embedding_dim -> head_hidden...`.
/// * `output`: one row per node applied to its own type's head output.
#[derive(Debug, Clone, PartialEq)]
pub struct UmParams {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Vec<Dense>>,
    pub output: Dense,
}

impl UmParams {
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        UmParams {
            trunk: self.trunk.iter().map(z).collect(),
            heads: self.heads.iter().map(|h| h.iter().map(z).collect()).collect(),
            output: z(&self.output),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(self.heads.iter().flatten())
            .chain(std::iter::once(&self.output))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(self.heads.iter_mut().flatten())
            .chain(std::iter::once(&mut self.output))
    }

    /// Parameter arrays in their fixed declaration order: for each layer
    /// (trunk, heads by type then depth, output) weights then bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|d| [d.weights.as_mut_slice(), d.bias.as_mut_slice()])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrites every parameter from `flat` (same order as [`Self::to_flat`]).
    pub fn copy_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &UmParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}
