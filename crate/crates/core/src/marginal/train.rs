use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{LoanRecord, R_MAX};
use crate::error::{invalid_input, Error, Result};
use crate::rng;

use super::net::QuantileNetParams;

/// The four shipped architectures. `Cl` is clipped linear regression; the
/// others put 2, 4 or 6 sigmoid layers in front of the linear output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    Cl,
    Clnn2,
    Clnn4,
    Clnn6,
}

impl ModelVariant {
    pub fn hidden_sizes(self) -> Vec<usize> {
        match self {
            ModelVariant::Cl => vec![],
            ModelVariant::Clnn2 => vec![128, 64],
            ModelVariant::Clnn4 => vec![128, 64, 32, 16],
            ModelVariant::Clnn6 => vec![64, 64, 32, 32, 16, 8],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Cl => "CL",
            ModelVariant::Clnn2 => "CLNN2",
            ModelVariant::Clnn4 => "CLNN4",
            ModelVariant::Clnn6 => "CLNN6",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CL" => Ok(ModelVariant::Cl),
            "CLNN2" => Ok(ModelVariant::Clnn2),
            "CLNN4" => Ok(ModelVariant::Clnn4),
            "CLNN6" => Ok(ModelVariant::Clnn6),
            other => Err(invalid_input(format!(
                "unknown model variant {other:?} (expected CL, CLNN2, CLNN4 or CLNN6)"
            ))),
        }
    }
}

/// Training hyper-parameters. Defaults: Adam, learning rate 0.001,
/// 1000 iterations, full batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub iterations: usize,
    /// `None` trains on the full batch every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![],
            learning_rate: 1e-3,
            iterations: 1000,
            batch_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_variant(variant: ModelVariant) -> Self {
        Self {
            hidden_sizes: variant.hidden_sizes(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(invalid_input("learning_rate must be positive"));
        }
        if self.iterations == 0 {
            return Err(invalid_input("iterations must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(invalid_input("batch_size must be positive"));
        }
        Ok(())
    }
}

/// K levels regularly spread over (0, 1): `i / (K + 1)`.
pub fn default_tau_grid(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
}

/// Freshly initialized network: Glorot-uniform weights, zero biases.
pub fn init_net(
    input_dim: usize,
    hidden_sizes: &[usize],
    tau_grid: &[f64],
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    seed: u64,
) -> QuantileNetParams {
    let mut layer_sizes = Vec::with_capacity(hidden_sizes.len() + 2);
    layer_sizes.push(input_dim);
    layer_sizes.extend_from_slice(hidden_sizes);
    layer_sizes.push(tau_grid.len());

    let mut rng = rng::stream(seed, 0);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    QuantileNetParams {
        layer_sizes,
        weights,
        biases,
        tau_grid: tau_grid.to_vec(),
        clip_range: (0.0, R_MAX),
        feature_mean,
        feature_std,
    }
}

/// Trains one category's quantile network on its labeled records.
///
/// Minimizes the mean pinball loss over records and levels with Adam for
/// the configured number of steps; deterministic given `cfg.seed`.
pub fn train_category(
    records: &[LoanRecord],
    tau_grid: &[f64],
    cfg: &TrainConfig,
) -> Result<QuantileNetParams> {
    cfg.validate()?;
    if tau_grid.is_empty() {
        return Err(invalid_input("tau grid must not be empty"));
    }

    let labeled: Vec<(&[f64], f64)> = records
        .iter()
        .filter_map(|r| r.realized_rate.map(|y| (r.features.as_slice(), y)))
        .collect();
    if labeled.is_empty() {
        return Err(invalid_input("no labeled records to train on"));
    }
    let dim = labeled[0].0.len();
    if labeled.iter().any(|(x, _)| x.len() != dim) {
        return Err(invalid_input("inconsistent feature dimensions"));
    }
    if labeled.iter().any(|&(_, y)| !(0.0..=R_MAX).contains(&y)) {
        return Err(invalid_input(format!("labels must lie in [0, {R_MAX}]")));
    }

    let (mean, std) = feature_standardization(&labeled, dim);
    let mut net = init_net(dim, &cfg.hidden_sizes, tau_grid, mean, std, cfg.seed);

    let xs: Vec<&[f64]> = labeled.iter().map(|&(x, _)| x).collect();
    let ys: Vec<f64> = labeled.iter().map(|&(_, y)| y).collect();

    let mut theta = net.flat_params();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut batch_rng = rng::stream(cfg.seed, 1);
    let mut batch_xs: Vec<&[f64]> = Vec::new();
    let mut batch_ys: Vec<f64> = Vec::new();

    for _ in 0..cfg.iterations {
        let grad = match cfg.batch_size {
            None => net.loss_and_gradient(&xs, &ys).1,
            Some(b) if b >= xs.len() => net.loss_and_gradient(&xs, &ys).1,
            Some(b) => {
                batch_xs.clear();
                batch_ys.clear();
                for _ in 0..b {
                    let i = batch_rng.random_range(0..xs.len());
                    batch_xs.push(xs[i]);
                    batch_ys.push(ys[i]);
                }
                net.loss_and_gradient(&batch_xs, &batch_ys).1
            }
        };
        adam.step(&mut theta, &grad);
        net.assign_flat(&theta);
    }
    Ok(net)
}

fn feature_standardization(labeled: &[(&[f64], f64)], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = labeled.len() as f64;
    let mut mean = vec![0.0; dim];
    for (x, _) in labeled {
        for (m, &v) in mean.iter_mut().zip(*x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for (x, _) in labeled {
        for (s, (&v, &m)) in var.iter_mut().zip(x.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .iter()
        .map(|&s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0 // constant feature: leave it centered, unscaled
            }
        })
        .collect();
    (mean, std)
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// On-disk model format, versioned by the `format` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub category: usize,
    pub train_config: TrainConfig,
    pub params: QuantileNetParams,
}

pub const MODEL_FORMAT: &str = "quantile-net-v1";

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let text = serde_json::to_string_pretty(model)
        .map_err(|e| invalid_input(format!("model serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path)?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if model.format != MODEL_FORMAT {
        return Err(Error::Schema(format!(
            "{}: unsupported model format {:?}",
            path.display(),
            model.format
        )));
    }
    Ok(model)
}
