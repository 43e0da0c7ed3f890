//! Conditional quantile learning and per-loan marginal distributions.
//!
//! Each category gets an independent quantile network trained with the
//! pinball loss at K levels simultaneously. Raw outputs may cross, so they
//! are rearranged (sorted) before a [`MarginalDistribution`] is built from
//! the grid.

mod dist;
mod net;
mod train;

pub use dist::{build_marginal, MarginalDistribution, RateDistribution, EPS_ZERO};
pub use net::QuantileNetParams;
pub use train::{
    default_tau_grid, init_net, load_model, save_model, train_category, ModelFile, ModelVariant,
    TrainConfig, MODEL_FORMAT,
};

use crate::error::{invalid_input, Result};

/// Pinball (quantile) loss at level `tau`; its minimizer over `q` is the
/// `tau`-quantile of `y`.
pub fn pinball_loss(y: f64, q: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid_input(format!("tau {tau} outside (0, 1)")));
    }
    Ok(net::pinball_raw(y, q, tau))
}

/// Restores monotonicity of crossing quantile predictions by sorting them
/// ascending (stable, multiset preserved).
pub fn rearrange(raw: &[f64]) -> Vec<f64> {
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("quantiles must not be NaN"));
    sorted
}

/// Forward pass, rearrangement and marginal construction in one step.
pub fn predict_marginal(params: &QuantileNetParams, x: &[f64]) -> Result<MarginalDistribution> {
    let raw = params.forward(x)?;
    build_marginal(&rearrange(&raw), &params.tau_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(1.0, 1.0, 0.5).unwrap(), 0.0);
        assert!((pinball_loss(1.0, 0.0, 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((pinball_loss(0.0, 1.0, 0.9).unwrap() - 0.1).abs() < 1e-12);
        assert!(pinball_loss(1.0, 1.0, 0.0).is_err());
        assert!(pinball_loss(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(rearrange(&[0.1, 0.3, 0.2]), vec![0.1, 0.2, 0.3]);
        assert_eq!(rearrange(&[0.1, 0.2, 0.3]), vec![0.1, 0.2, 0.3]);
        assert_eq!(rearrange(&[0.4, 0.4, 0.4]), vec![0.4, 0.4, 0.4]);
    }

    proptest! {
        #[test]
        fn pinball_nonnegative_zero_iff_equal(
            y in -2.0f64..2.0, q in -2.0f64..2.0, tau in 0.01f64..0.99,
        ) {
            let loss = pinball_loss(y, q, tau).unwrap();
            prop_assert!(loss >= 0.0);
            if y == q {
                prop_assert_eq!(loss, 0.0);
            } else {
                prop_assert!(loss > 0.0);
            }
        }

        #[test]
        fn rearranged_forward_is_monotone_and_clipped(
            weights in proptest::collection::vec(-3.0f64..3.0, 8),
            biases in proptest::collection::vec(-2.0f64..2.0, 4),
            x in proptest::collection::vec(-4.0f64..4.0, 2),
        ) {
            let params = QuantileNetParams {
                layer_sizes: vec![2, 4],
                weights: vec![weights],
                biases: vec![biases],
                tau_grid: vec![0.2, 0.4, 0.6, 0.8],
                clip_range: (0.0, 1.5),
                feature_mean: vec![0.0, 0.0],
                feature_std: vec![1.0, 1.0],
            };
            let out = rearrange(&params.forward(&x).unwrap());
            for w in out.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for q in out {
                prop_assert!((0.0..=1.5).contains(&q));
            }
        }
    }
}
