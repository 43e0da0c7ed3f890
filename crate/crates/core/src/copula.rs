//! Randomized probability integral transform for mixed discrete-continuous
//! rates, Gaussian score mapping, and the one-factor dependence structure.
//!
//! A repayment-rate CDF jumps at zero (and wherever fitted quantiles tie or
//! the grid is clamped). `rand_pit` fills every such gap with an independent
//! uniform so the transformed variable is exactly U(0, 1) and the transform
//! stays invertible; at continuity points it reduces to the plain CDF.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::marginal::RateDistribution;
use crate::normal;

/// Common-factor realization and per-category loadings at one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub date_index: u32,
    /// Fitted common-factor realization.
    pub m: f64,
    /// Loadings, one per category, each in [0, 1].
    pub betas: Vec<f64>,
    /// Set when the fit could not identify the factor (all loadings zero).
    pub degenerate: bool,
}

impl FactorParams {
    pub fn new(date_index: u32, m: f64, betas: Vec<f64>) -> Result<Self> {
        if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid_input("factor loadings must lie in [0, 1]"));
        }
        if !m.is_finite() {
            return Err(invalid_input("factor realization must be finite"));
        }
        Ok(Self {
            date_index,
            m,
            betas,
            degenerate: false,
        })
    }
}

/// Transformed values are kept this far away from {0, 1} so the normal
/// inverse stays finite even at gap endpoints.
pub const PIT_CLAMP: f64 = 1e-12;

/// Randomized probability integral transform (the gap at a jump of F is
/// filled by `u_prime`):
///
/// `u = F-(y) + u' * (F+(y) - F-(y))`
///
/// Caller must pass `u_prime` in (0, 1). At continuity points the result is
/// `F(y)` regardless of `u_prime`. Observations outside the law's support
/// (possible when the law only approximates the data) are folded onto the
/// nearest boundary, whose clamp atom then gap-fills them.
pub fn rand_pit<D: RateDistribution + ?Sized>(y: f64, dist: &D, u_prime: f64) -> f64 {
    debug_assert!(u_prime > 0.0 && u_prime < 1.0);
    let (support_lo, support_hi) = dist.support_bounds();
    let y = y.clamp(support_lo, support_hi);
    let lo = dist.cdf_minus(y);
    let hi = dist.cdf_plus(y);
    let u = lo + u_prime * (hi - lo);
    u.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP)
}

/// Inverse of the randomized transform: the generalized inverse CDF.
///
/// For any `y` in the support and any `u_prime`,
/// `inverse_pit(rand_pit(y, dist, u_prime), dist) == y`.
pub fn inverse_pit<D: RateDistribution + ?Sized>(u: f64, dist: &D) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    dist.quantile_raw(u)
}

/// Standard normal quantile of a uniform score.
pub fn gaussian_score(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid_input(format!("uniform score {u} outside (0, 1)")));
    }
    Ok(normal::inverse_cdf(u))
}

/// Standard normal CDF.
pub fn gaussian_cdf(v: f64) -> f64 {
    normal::cdf(v)
}

/// One-factor combination `beta * m + sqrt(1 - beta^2) * z`.
///
/// The loading is constrained to [0, 1]; the nonnegative sign convention
/// breaks the `(m, beta) <-> (-m, -beta)` indeterminacy.
pub fn factor_combine(m: f64, z: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid_input(format!("loading {beta} outside [0, 1]")));
    }
    Ok(beta * m + (1.0 - beta * beta).sqrt() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::build_marginal;
    use crate::rng;

    fn grid99() -> Vec<f64> {
        (1..=99).map(|i| i as f64 / 100.0).collect()
    }

    /// Mixed law: 40% atom at zero, then a ramp.
    fn atom_dist() -> crate::marginal::MarginalDistribution {
        let quants: Vec<f64> = (1..=99)
            .map(|k| if k <= 40 { 0.0 } else { (k - 40) as f64 * 0.012 })
            .collect();
        build_marginal(&quants, &grid99()).unwrap()
    }

    #[test]
    fn continuous_point_ignores_u_prime() {
        let d = atom_dist();
        let y = d.quantile_raw(0.7);
        for u_prime in [0.01, 0.5, 0.99] {
            assert!((rand_pit(y, &d, u_prime) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn atom_gap_is_filled_by_u_prime() {
        let d = atom_dist();
        assert!((rand_pit(0.0, &d, 0.5) - 0.2).abs() < 1e-12);
        assert!((rand_pit(0.0, &d, 1.0 - 1e-12) - 0.4).abs() < 1e-9);
        assert!(rand_pit(0.0, &d, 1e-12) < 1e-9);
    }

    #[test]
    fn inverse_pit_examples() {
        let d = atom_dist();
        // inside the atom gap
        assert_eq!(inverse_pit(0.2, &d), 0.0);
        // at a grid knot above the atom
        assert!((inverse_pit(0.5, &d) - 0.12).abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_exact_across_atom_sizes() {
        let taus = grid99();
        let no_atom: Vec<f64> = (1..=99).map(|k| 0.02 + k as f64 * 0.011).collect();
        let all_zero = vec![0.0; 99];
        let dists = [
            atom_dist(),
            build_marginal(&no_atom, &taus).unwrap(),
            build_marginal(&all_zero, &taus).unwrap(),
        ];
        let mut rng = rng::stream(99, 0);
        for d in &dists {
            for _ in 0..1000 {
                let w = rng::uniform_open01(&mut rng);
                let u_prime = rng::uniform_open01(&mut rng);
                let y = d.quantile_raw(w);
                let u = rand_pit(y, d, u_prime);
                let back = inverse_pit(u, d);
                assert!(
                    (back - y).abs() <= 1e-9,
                    "round trip {y} -> {u} -> {back}"
                );
            }
        }
    }

    #[test]
    fn rand_pit_output_is_uniform() {
        // Kolmogorov-Smirnov against U(0,1) at the 1% critical value.
        let d = atom_dist();
        let n = 100_000usize;
        let mut rng = rng::stream(7, 0);
        let mut us: Vec<f64> = (0..n)
            .map(|_| {
                let w = rng::uniform_open01(&mut rng);
                let u_prime = rng::uniform_open01(&mut rng);
                rand_pit(d.quantile_raw(w), &d, u_prime)
            })
            .collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &u) in us.iter().enumerate() {
            let hi = (i + 1) as f64 / n as f64 - u;
            let lo = u - i as f64 / n as f64;
            ks = ks.max(hi).max(lo);
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(ks < critical, "KS statistic {ks} >= {critical}");
    }

    #[test]
    fn gaussian_score_and_cdf() {
        assert_eq!(gaussian_score(0.5).unwrap(), 0.0);
        assert_eq!(gaussian_cdf(0.0), 0.5);
        assert!((gaussian_score(0.975).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(gaussian_score(0.0).is_err());
        assert!(gaussian_score(1.0).is_err());
        // mutually inverse
        for i in 1..100 {
            let u = i as f64 / 100.0;
            assert!((gaussian_cdf(gaussian_score(u).unwrap()) - u).abs() < 1e-8);
        }
    }

    #[test]
    fn factor_combine_limits_and_arithmetic() {
        assert_eq!(factor_combine(2.0, -0.7, 0.0).unwrap(), -0.7);
        assert_eq!(factor_combine(2.0, -0.7, 1.0).unwrap(), 2.0);
        assert!((factor_combine(1.0, -0.5, 0.6).unwrap() - 0.2).abs() < 1e-12);
        assert!(factor_combine(0.0, 0.0, 1.1).is_err());
        assert!(factor_combine(0.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn factor_combine_preserves_unit_variance() {
        let mut rng = rng::stream(3, 0);
        for &beta in &[0.0, 0.3, 0.8, 1.0] {
            let n = 1_000_000usize;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let m = rng::standard_normal(&mut rng);
                let z = rng::standard_normal(&mut rng);
                let v = factor_combine(m, z, beta).unwrap();
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            assert!((var - 1.0).abs() < 0.01, "beta={beta} var={var}");
        }
    }

    #[test]
    fn score_correlation_is_product_of_loadings() {
        let (beta_a, beta_b) = (0.4, 0.9);
        let n = 100_000usize;
        let mut rng = rng::stream(17, 0);
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let m = rng::standard_normal(&mut rng);
            let va = factor_combine(m, rng::standard_normal(&mut rng), beta_a).unwrap();
            let vb = factor_combine(m, rng::standard_normal(&mut rng), beta_b).unwrap();
            sa += va;
            sb += vb;
            sab += va * vb;
            saa += va * va;
            sbb += vb * vb;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let var_a = saa / nf - (sa / nf) * (sa / nf);
        let var_b = sbb / nf - (sb / nf) * (sb / nf);
        let corr = cov / (var_a * var_b).sqrt();
        assert!(
            (corr - beta_a * beta_b).abs() < 0.02,
            "corr {corr} should be near {}",
            beta_a * beta_b
        );
    }

    #[test]
    fn factor_params_validation() {
        assert!(FactorParams::new(1, 0.5, vec![0.0, 1.0, 0.3]).is_ok());
        assert!(FactorParams::new(1, 0.5, vec![1.2]).is_err());
        assert!(FactorParams::new(1, f64::NAN, vec![0.5]).is_err());
    }
}
