//! Monte Carlo generation of the portfolio repayment-rate distribution.
//!
//! Each draw runs the model in reverse: sample the common factor and every
//! loan's idiosyncratic shock, combine them into Gaussian scores, map the
//! scores through the standard normal CDF and each loan's generalized
//! inverse, and aggregate into the amount-weighted portfolio rate.

use std::io::Write;

use rayon::prelude::*;

use crate::copula::{FactorParams, PIT_CLAMP};
use crate::error::{invalid_input, Result};
use crate::marginal::RateDistribution;
use crate::normal;
use crate::rng;

/// Simulated distribution of the portfolio rate with its summary moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioDistribution {
    pub date_index: u32,
    pub draws: Vec<f64>,
    pub stats: SummaryStats,
    pub n_sim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (divisor n-1).
    pub std: f64,
    /// Central-moment skewness `m3 / m2^(3/2)`.
    pub skewness: f64,
    /// Excess kurtosis `m4 / m2^2 - 3`.
    pub kurtosis: f64,
    /// Set when the draws are (numerically) constant; skewness and kurtosis
    /// are reported as 0 in that case.
    pub degenerate: bool,
}

/// Simulates `n_sim` portfolio rates.
///
/// `marginals`, `categories` (1-based) and `amounts` describe the loans in
/// the pool, one entry each per loan. Draw `s` reads the RNG stream
/// `(seed, date_index, s)`, so results are identical whether draws are
/// evaluated sequentially or in parallel, and distinct dates never share
/// variates.
pub fn simulate_portfolio<D: RateDistribution + Sync>(
    date_index: u32,
    marginals: &[D],
    categories: &[usize],
    amounts: &[f64],
    params: &FactorParams,
    n_sim: usize,
    seed: u64,
) -> Result<PortfolioDistribution> {
    if marginals.is_empty() {
        return Err(invalid_input("no loans to simulate"));
    }
    if marginals.len() != amounts.len() || marginals.len() != categories.len() {
        return Err(invalid_input(format!(
            "{} marginals, {} categories, {} amounts",
            marginals.len(),
            categories.len(),
            amounts.len()
        )));
    }
    if n_sim == 0 {
        return Err(invalid_input("n_sim must be at least 1"));
    }
    let j = params.betas.len();
    if let Some(&bad) = categories.iter().find(|&&c| c < 1 || c > j) {
        return Err(invalid_input(format!("loan category {bad} outside 1..={j}")));
    }
    if amounts.iter().any(|&p| !(p > 0.0)) {
        return Err(invalid_input("amounts must be positive"));
    }

    if n_sim > u32::MAX as usize {
        return Err(invalid_input("n_sim exceeds the draw-stream address space"));
    }
    let draws: Vec<f64> = (0..n_sim)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::stream2(seed, date_index, s as u32);
            let m = rng::standard_normal(&mut rng);
            let mut repaid = 0.0;
            let mut total = 0.0;
            for ((dist, &cat), &amount) in marginals.iter().zip(categories).zip(amounts) {
                let z = rng::standard_normal(&mut rng);
                let beta = params.betas[cat - 1];
                let v = beta * m + (1.0 - beta * beta).sqrt() * z;
                let u = normal::cdf(v).clamp(PIT_CLAMP, 1.0 - PIT_CLAMP);
                let r = dist.quantile_raw(u);
                repaid += r * amount;
                total += amount;
            }
            repaid / total
        })
        .collect();

    let stats = summarize(&draws)?;
    Ok(PortfolioDistribution {
        date_index,
        draws,
        stats,
        n_sim,
        seed,
    })
}

/// Sample mean, standard deviation, skewness and excess kurtosis.
///
/// Sums are compensated (Neumaier) so the aggregation is exact enough to
/// recompute from the draws bit-for-bit regardless of how they were
/// produced. Needs at least 4 draws for the kurtosis to make sense.
pub fn summarize(draws: &[f64]) -> Result<SummaryStats> {
    if draws.len() < 4 {
        return Err(invalid_input(format!(
            "need at least 4 draws, got {}",
            draws.len()
        )));
    }
    let n = draws.len() as f64;
    let mean = neumaier_sum(draws.iter().copied()) / n;
    let m2 = neumaier_sum(draws.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = neumaier_sum(draws.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = neumaier_sum(draws.iter().map(|x| (x - mean).powi(4))) / n;
    let std = (m2 * n / (n - 1.0)).sqrt();

    let degenerate = m2 < 1e-24;
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Ok(SummaryStats {
        mean,
        std,
        skewness,
        kurtosis,
        degenerate,
    })
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Empirical quantile of sorted draws with linear interpolation between
/// order statistics (the common "type 7" rule).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub const REPORT_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];

/// Writes the simulation report: seed, moments, report quantiles, and a
/// fixed-width histogram of the draws. The timestamp line is omitted when
/// `timestamp_unix` is `None` so reruns stay byte-identical.
pub fn write_report(
    dist: &PortfolioDistribution,
    bins: usize,
    timestamp_unix: Option<u64>,
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "simulation-report-v1")?;
    if let Some(ts) = timestamp_unix {
        writeln!(out, "generated_at_unix = {ts}")?;
    }
    writeln!(out, "date_index = {}", dist.date_index)?;
    writeln!(out, "n_sim = {}", dist.n_sim)?;
    writeln!(out, "seed = {}", dist.seed)?;
    writeln!(out, "mean = {:.12}", dist.stats.mean)?;
    writeln!(out, "std = {:.12}", dist.stats.std)?;
    writeln!(out, "skewness = {:.12}", dist.stats.skewness)?;
    writeln!(out, "kurtosis = {:.12}", dist.stats.kurtosis)?;
    writeln!(out, "degenerate = {}", dist.stats.degenerate)?;

    let mut sorted = dist.draws.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for q in REPORT_QUANTILES {
        writeln!(
            out,
            "q{:02.0} = {:.12}",
            q * 100.0,
            empirical_quantile(&sorted, q)
        )?;
    }

    let lo = sorted[0];
    let hi = *sorted.last().unwrap();
    writeln!(out, "histogram_bins = {bins}")?;
    writeln!(out, "histogram_range = [{lo:.12}, {hi:.12}]")?;
    let mut counts = vec![0usize; bins];
    if hi > lo {
        let width = (hi - lo) / bins as f64;
        for &d in &sorted {
            let b = (((d - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    } else {
        counts[0] = sorted.len();
    }
    for (i, c) in counts.iter().enumerate() {
        writeln!(out, "bin[{i}] = {c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::R_MAX;
    use crate::marginal::{build_marginal, MarginalDistribution};

    fn taus9() -> Vec<f64> {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }

    fn point_mass(value: f64) -> MarginalDistribution {
        build_marginal(&vec![value; 9], &taus9()).unwrap()
    }

    fn params(betas: Vec<f64>) -> FactorParams {
        FactorParams::new(1, 0.0, betas).unwrap()
    }

    #[test]
    fn point_mass_marginals_give_constant_draws() {
        let marginals = vec![point_mass(0.5), point_mass(0.5)];
        let dist = simulate_portfolio(
            1,
            &marginals,
            &[1, 1],
            &[100.0, 300.0],
            &params(vec![0.4]),
            500,
            7,
        )
        .unwrap();
        assert!(dist.draws.iter().all(|&d| (d - 0.5).abs() < 1e-12));
        assert_eq!(dist.stats.std, 0.0);
        assert!(dist.stats.degenerate);
        assert_eq!(dist.stats.skewness, 0.0);
    }

    fn spread_marginal() -> MarginalDistribution {
        let quants: Vec<f64> = (1..=9).map(|i| 0.1 + 0.08 * i as f64).collect();
        build_marginal(&quants, &taus9()).unwrap()
    }

    #[test]
    fn independent_loans_diversify_like_root_n() {
        // beta = 0: portfolio std shrinks ~ 1/sqrt(N).
        let std_for = |n: usize| {
            let marginals: Vec<_> = (0..n).map(|_| spread_marginal()).collect();
            let categories = vec![1usize; n];
            let amounts = vec![1.0; n];
            simulate_portfolio(1, &marginals, &categories, &amounts, &params(vec![0.0]), 4000, 11)
                .unwrap()
                .stats
                .std
        };
        let ratio = std_for(10) / std_for(1000);
        assert!(
            (ratio - 10.0).abs() < 2.0,
            "std ratio {ratio} should be near 10"
        );
    }

    #[test]
    fn comonotone_pool_reproduces_the_single_loan_marginal() {
        // beta = 1: all loans move together, so the portfolio rate has the
        // marginal's law. KS test at the 1% critical value.
        let n_loans = 50;
        let marginals: Vec<_> = (0..n_loans).map(|_| spread_marginal()).collect();
        let categories = vec![1usize; n_loans];
        let amounts = vec![10.0; n_loans];
        let n_sim = 10_000;
        let dist = simulate_portfolio(
            1,
            &marginals,
            &categories,
            &amounts,
            &params(vec![1.0]),
            n_sim,
            3,
        )
        .unwrap();
        let reference = spread_marginal();
        let mut sorted = dist.draws.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        use crate::marginal::RateDistribution;
        // Tie-aware KS: the law has atoms (tail clamps), so compare the
        // empirical CDF just before and just after each run of equal draws
        // against the one-sided limits. Aggregating 50 loans perturbs atom
        // points by an ulp, hence the guard band around each run.
        let mut ks = 0.0f64;
        let n = sorted.len();
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end < n && sorted[end] - sorted[start] < 1e-9 {
                end += 1;
            }
            let value = sorted[start];
            ks = ks.max((reference.cdf_minus(value - 1e-9) - start as f64 / n as f64).abs());
            ks = ks.max((reference.cdf_plus(value + 1e-9) - end as f64 / n as f64).abs());
            start = end;
        }
        let critical = 1.628 / (n_sim as f64).sqrt();
        assert!(ks < critical, "KS {ks} >= {critical}");
    }

    #[test]
    fn draws_stay_inside_the_clip_range() {
        let marginals = vec![spread_marginal(), point_mass(0.0), point_mass(1.5)];
        let dist = simulate_portfolio(
            1,
            &marginals,
            &[1, 1, 1],
            &[5.0, 2.0, 3.0],
            &params(vec![0.7]),
            2000,
            5,
        )
        .unwrap();
        assert!(dist.draws.iter().all(|&d| (0.0..=R_MAX).contains(&d)));
    }

    #[test]
    fn draw_streams_are_prefix_stable() {
        let marginals = vec![spread_marginal(), spread_marginal()];
        let run = |n_sim| {
            simulate_portfolio(
                1,
                &marginals,
                &[1, 1],
                &[1.0, 2.0],
                &params(vec![0.5]),
                n_sim,
                13,
            )
            .unwrap()
            .draws
        };
        let short = run(100);
        let long = run(200);
        assert_eq!(&long[..100], &short[..]);
    }

    #[test]
    fn summarize_matches_hand_computation() {
        let stats = summarize(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((stats.mean - 0.25).abs() < 1e-15);
        assert!((stats.std - 0.5).abs() < 1e-15);
        assert!((stats.skewness - 2.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!((stats.kurtosis - (7.0 / 3.0 - 3.0)).abs() < 1e-12);
        assert!(!stats.degenerate);
    }

    #[test]
    fn summarize_on_normal_sample_is_near_zero_skew_and_excess() {
        let mut rng = rng::stream(21, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| rng::standard_normal(&mut rng)).collect();
        let stats = summarize(&draws).unwrap();
        assert!(stats.skewness.abs() < 0.1, "skew {}", stats.skewness);
        assert!(stats.kurtosis.abs() < 0.1, "excess kurtosis {}", stats.kurtosis);
    }

    #[test]
    fn summarize_rejects_tiny_samples() {
        assert!(summarize(&[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let marginals = vec![point_mass(0.5)];
        assert!(simulate_portfolio(1, &marginals, &[1, 1], &[1.0], &params(vec![0.5]), 10, 0).is_err());
        assert!(simulate_portfolio(1, &marginals, &[2], &[1.0], &params(vec![0.5]), 10, 0).is_err());
        assert!(simulate_portfolio(1, &marginals, &[1], &[0.0], &params(vec![0.5]), 10, 0).is_err());
        let empty: Vec<MarginalDistribution> = vec![];
        assert!(simulate_portfolio(1, &empty, &[], &[], &params(vec![0.5]), 10, 0).is_err());
    }

    #[test]
    fn report_is_deterministic_and_parses_back() {
        let marginals = vec![spread_marginal(), spread_marginal()];
        let dist = simulate_portfolio(
            2,
            &marginals,
            &[1, 1],
            &[1.0, 1.0],
            &params(vec![0.3]),
            500,
            1,
        )
        .unwrap();
        let mut a = Vec::new();
        write_report(&dist, 50, None, &mut a).unwrap();
        let mut b = Vec::new();
        write_report(&dist, 50, None, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("simulation-report-v1"));
        assert!(!text.contains("generated_at_unix"));
        assert!(text.contains("q50 ="));
        assert!(text.contains("bin[49] ="));

        let mut c = Vec::new();
        write_report(&dist, 50, Some(1723), &mut c).unwrap();
        assert!(String::from_utf8(c).unwrap().contains("generated_at_unix = 1723"));
    }

    #[test]
    fn empirical_quantile_interpolates() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&sorted, 0.0), 1.0);
        assert_eq!(empirical_quantile(&sorted, 1.0), 5.0);
        assert_eq!(empirical_quantile(&sorted, 0.5), 3.0);
        assert!((empirical_quantile(&sorted, 0.125) - 1.5).abs() < 1e-12);
    }
}
