use serde::{Deserialize, Serialize};

use crate::domain::R_MAX;
use crate::error::{invalid_input, Result};

/// Fitted quantiles at or below this value count as the atom at zero;
/// exact zeros come from the clip, the tolerance guards float noise.
pub const EPS_ZERO: f64 = 1e-9;

/// A repayment-rate law exposed through its CDF one-sided limits and
/// generalized inverse. Implemented by fitted marginals and by the
/// synthetic generator's closed-form laws.
pub trait RateDistribution {
    /// Left limit `F-(y) = P(Y < y)`.
    fn cdf_minus(&self, y: f64) -> f64;
    /// Right limit `F+(y) = P(Y <= y)`.
    fn cdf_plus(&self, y: f64) -> f64;
    /// Generalized inverse CDF. Caller must pass `tau` in (0, 1).
    fn quantile_raw(&self, tau: f64) -> f64;

    /// Smallest and largest value the law can produce. Observations outside
    /// these bounds (possible when the law is a fitted approximation) are
    /// treated as boundary mass by the randomized transform.
    fn support_bounds(&self) -> (f64, f64);

    /// Checked generalized inverse.
    fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid_input(format!("quantile level {tau} outside (0, 1)")));
        }
        Ok(self.quantile_raw(tau))
    }
}

/// A loan's repayment-rate law as a rearranged quantile grid with a
/// probability atom at zero.
///
/// The law is the one whose quantile function linearly interpolates the
/// grid knots: flat at 0 up to the atom mass `p0`, rising through the
/// positive knots, and clamped to the outermost fitted quantiles in the
/// tails (no extrapolation beyond the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDistribution {
    tau_grid: Vec<f64>,
    sorted_quantiles: Vec<f64>,
    atom_at_zero: f64,
    // Vertices of the quantile-function polyline over tau in [0, 1].
    vtau: Vec<f64>,
    vq: Vec<f64>,
}

/// Builds the piecewise-linear law from a nondecreasing quantile grid.
///
/// `sorted_quantiles` must already be rearranged; a non-monotone grid is
/// rejected so crossing fits cannot silently produce an invalid CDF.
pub fn build_marginal(sorted_quantiles: &[f64], tau_grid: &[f64]) -> Result<MarginalDistribution> {
    if sorted_quantiles.is_empty() || sorted_quantiles.len() != tau_grid.len() {
        return Err(invalid_input(format!(
            "need matching non-empty grids, got {} quantiles and {} levels",
            sorted_quantiles.len(),
            tau_grid.len()
        )));
    }
    for w in tau_grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(invalid_input("tau grid must be strictly increasing"));
        }
    }
    if !(tau_grid[0] > 0.0 && *tau_grid.last().unwrap() < 1.0) {
        return Err(invalid_input("tau grid must lie inside (0, 1)"));
    }
    for w in sorted_quantiles.windows(2) {
        if w[0] > w[1] {
            return Err(invalid_input(
                "quantiles are not nondecreasing; rearrange before building the marginal",
            ));
        }
    }
    let lo = sorted_quantiles[0];
    let hi = *sorted_quantiles.last().unwrap();
    if !(lo >= 0.0 && hi <= R_MAX) {
        return Err(invalid_input(format!(
            "quantiles [{lo}, {hi}] outside [0, {R_MAX}]"
        )));
    }

    // Atom mass: the highest grid level whose quantile is (numerically) zero.
    let num_zero = sorted_quantiles.iter().filter(|&&q| q <= EPS_ZERO).count();
    let atom_at_zero = if num_zero == 0 {
        0.0
    } else {
        tau_grid[num_zero - 1]
    };

    let mut vtau = Vec::with_capacity(tau_grid.len() + 3);
    let mut vq = Vec::with_capacity(tau_grid.len() + 3);
    if num_zero == sorted_quantiles.len() {
        // Degenerate all-zero loan: point mass at 0.
        vtau.extend([0.0, 1.0]);
        vq.extend([0.0, 0.0]);
    } else if num_zero > 0 {
        // Flat at 0 through the atom, then linearly up to the first
        // positive knot so that F(Q(tau)) = tau above the atom.
        vtau.push(0.0);
        vq.push(0.0);
        vtau.push(atom_at_zero);
        vq.push(0.0);
        for k in num_zero..tau_grid.len() {
            vtau.push(tau_grid[k]);
            vq.push(sorted_quantiles[k]);
        }
        vtau.push(1.0);
        vq.push(hi);
    } else {
        // No atom: lower tail clamped flat to the first fitted quantile.
        vtau.push(0.0);
        vq.push(lo);
        for k in 0..tau_grid.len() {
            vtau.push(tau_grid[k]);
            vq.push(sorted_quantiles[k]);
        }
        vtau.push(1.0);
        vq.push(hi);
    }

    Ok(MarginalDistribution {
        tau_grid: tau_grid.to_vec(),
        sorted_quantiles: sorted_quantiles.to_vec(),
        atom_at_zero,
        vtau,
        vq,
    })
}

impl MarginalDistribution {
    /// Probability mass at exactly zero implied by the grid, `F+(0)`.
    pub fn atom_at_zero(&self) -> f64 {
        self.atom_at_zero
    }

    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    pub fn sorted_quantiles(&self) -> &[f64] {
        &self.sorted_quantiles
    }

    /// Largest value the law can produce.
    pub fn upper_support(&self) -> f64 {
        *self.vq.last().unwrap()
    }
}

impl RateDistribution for MarginalDistribution {
    fn cdf_plus(&self, y: f64) -> f64 {
        let last = *self.vq.last().unwrap();
        if y < self.vq[0] {
            return 0.0;
        }
        if y >= last {
            return 1.0;
        }
        // Last vertex at or below y; the following segment rises through y.
        let j = self.vq.partition_point(|&q| q <= y) - 1;
        let (q0, q1) = (self.vq[j], self.vq[j + 1]);
        let (t0, t1) = (self.vtau[j], self.vtau[j + 1]);
        t0 + (t1 - t0) * (y - q0) / (q1 - q0)
    }

    fn cdf_minus(&self, y: f64) -> f64 {
        if y <= self.vq[0] {
            return 0.0;
        }
        if y > *self.vq.last().unwrap() {
            return 1.0;
        }
        // First vertex at or above y; the preceding segment rises through y.
        let j = self.vq.partition_point(|&q| q < y);
        let (q0, q1) = (self.vq[j - 1], self.vq[j]);
        let (t0, t1) = (self.vtau[j - 1], self.vtau[j]);
        t0 + (t1 - t0) * (y - q0) / (q1 - q0)
    }

    fn quantile_raw(&self, tau: f64) -> f64 {
        debug_assert!(tau > 0.0 && tau < 1.0);
        let i = self.vtau.partition_point(|&t| t < tau);
        let (t0, t1) = (self.vtau[i - 1], self.vtau[i]);
        if self.vq[i - 1] == self.vq[i] {
            return self.vq[i];
        }
        let w = (tau - t0) / (t1 - t0);
        self.vq[i - 1] + w * (self.vq[i] - self.vq[i - 1])
    }

    fn support_bounds(&self) -> (f64, f64) {
        (self.vq[0], *self.vq.last().unwrap())
    }
}
