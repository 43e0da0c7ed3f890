use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

/// Per-category feed-forward network producing K conditional quantiles.
///
/// Architecture: standardized features, `L` sigmoid hidden layers, a linear
/// output layer of width K, and a final clip to `clip_range`. With no hidden
/// layers this degenerates to clipped linear quantile regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNetParams {
    /// `[input, hidden..., K]`.
    pub layer_sizes: Vec<usize>,
    /// One row-major `out x in` matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub tau_grid: Vec<f64>,
    pub clip_range: (f64, f64),
    /// Per-feature standardization constants from the training data.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl QuantileNetParams {
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Raw (unrearranged) quantile predictions for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(invalid_input(format!(
                "feature vector has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut activation = self.standardize(x);
        for layer in 0..self.num_layers() {
            let mut z = self.affine(layer, &activation);
            if layer + 1 < self.num_layers() {
                for v in &mut z {
                    *v = sigmoid(*v);
                }
            }
            activation = z;
        }
        let (lo, hi) = self.clip_range;
        for v in &mut activation {
            *v = v.clamp(lo, hi);
        }
        Ok(activation)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    fn affine(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let rows = self.layer_sizes[layer + 1];
        let cols = self.layer_sizes[layer];
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut acc = b[r];
            let row = &w[r * cols..(r + 1) * cols];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
        out
    }

    pub(crate) fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All weights then all biases, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in 0..self.num_layers() {
            flat.extend_from_slice(&self.weights[layer]);
            flat.extend_from_slice(&self.biases[layer]);
        }
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        debug_assert_eq!(flat.len(), self.num_params());
        let mut at = 0;
        for layer in 0..self.weights.len() {
            let wlen = self.weights[layer].len();
            self.weights[layer].copy_from_slice(&flat[at..at + wlen]);
            at += wlen;
            let blen = self.biases[layer].len();
            self.biases[layer].copy_from_slice(&flat[at..at + blen]);
            at += blen;
        }
    }

    /// Mean pinball loss over a batch, averaged over records and levels.
    pub fn mean_pinball_loss(&self, xs: &[&[f64]], ys: &[f64]) -> f64 {
        let k = self.output_dim();
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let out = self.forward(x).expect("dimension checked by caller");
            for (q, &tau) in out.iter().zip(&self.tau_grid) {
                total += pinball_raw(y, *q, tau);
            }
        }
        total / (xs.len() as f64 * k as f64)
    }

    /// Mean pinball loss and its gradient in `flat_params` layout.
    ///
    /// The clip is differentiated straight-through: identity inside
    /// `clip_range`, zero outside. At `y == q` the `y <= q` branch of the
    /// loss supplies the subgradient.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let n_layers = self.num_layers();
        let k = self.output_dim();
        let scale = 1.0 / (xs.len() as f64 * k as f64);
        let (lo, hi) = self.clip_range;

        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;

        for (x, &y) in xs.iter().zip(ys) {
            // Forward pass keeping every layer's activation.
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            acts.push(self.standardize(x));
            for layer in 0..n_layers {
                let mut z = self.affine(layer, &acts[layer]);
                if layer + 1 < n_layers {
                    for v in &mut z {
                        *v = sigmoid(*v);
                    }
                }
                acts.push(z);
            }
            let preclip = &acts[n_layers];

            // d(loss)/d(pre-clip output).
            let mut delta: Vec<f64> = preclip
                .iter()
                .zip(&self.tau_grid)
                .map(|(&z, &tau)| {
                    let q = z.clamp(lo, hi);
                    loss += pinball_raw(y, q, tau);
                    if z < lo || z > hi {
                        0.0
                    } else if y > q {
                        -tau * scale
                    } else {
                        (1.0 - tau) * scale
                    }
                })
                .collect();

            // Backward pass.
            for layer in (0..n_layers).rev() {
                let cols = self.layer_sizes[layer];
                let input = &acts[layer];
                {
                    let gw = &mut grad_w[layer];
                    let gb = &mut grad_b[layer];
                    for (r, &d) in delta.iter().enumerate() {
                        gb[r] += d;
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        for (g, &xi) in row.iter_mut().zip(input) {
                            *g += d * xi;
                        }
                    }
                }
                if layer > 0 {
                    let w = &self.weights[layer];
                    let mut prev = vec![0.0; cols];
                    for (r, &d) in delta.iter().enumerate() {
                        let row = &w[r * cols..(r + 1) * cols];
                        for (p, &wi) in prev.iter_mut().zip(row) {
                            *p += d * wi;
                        }
                    }
                    // Through the sigmoid of the previous layer.
                    for (p, &a) in prev.iter_mut().zip(input) {
                        *p *= a * (1.0 - a);
                    }
                    delta = prev;
                }
            }
        }

        let mut flat = Vec::with_capacity(self.num_params());
        for layer in 0..n_layers {
            flat.extend_from_slice(&grad_w[layer]);
            flat.extend_from_slice(&grad_b[layer]);
        }
        (loss * scale, flat)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn pinball_raw(y: f64, q: f64, tau: f64) -> f64 {
    if y > q {
        tau * (y - q)
    } else {
        (1.0 - tau) * (q - y)
    }
}
