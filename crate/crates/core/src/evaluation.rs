//! Distribution-forecast evaluation: randomized PIT calibration scored by
//! the Shapiro-Wilk W-test, MAPE of the predicted means, and the
//! moving-average top-down baseline.

use std::io::Write;

use crate::error::{invalid_input, Error, Result};
use crate::normal;
use crate::rng;
use crate::simulation::SummaryStats;

/// PIT of a realized rate against an empirical forecast distribution.
///
/// `u = (#draws below + u' * #draws tied) / n`, clamped away from {0, 1}
/// by half an empirical probability step; ties are counted within 1e-12.
/// The randomized tie handling mirrors the gap-filling transform used for
/// the marginals, here applied to the discreteness of the draw set.
/// Returns `(u, normal score of u)`.
pub fn pit_value(draws: &[f64], realized: f64, u_prime: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(invalid_input("empty draw set"));
    }
    if !(u_prime > 0.0 && u_prime < 1.0) {
        return Err(invalid_input(format!("u_prime {u_prime} outside (0, 1)")));
    }
    let n = draws.len() as f64;
    let mut below = 0usize;
    let mut tied = 0usize;
    for &d in draws {
        if (d - realized).abs() <= 1e-12 {
            tied += 1;
        } else if d < realized {
            below += 1;
        }
    }
    let raw = (below as f64 + u_prime * tied as f64) / n;
    let u = raw.clamp(1.0 / (2.0 * n), 1.0 - 1.0 / (2.0 * n));
    Ok((u, normal::inverse_cdf(u)))
}

/// Shapiro-Wilk normality test for 3 <= n <= 50 samples.
///
/// W is the squared correlation between the order statistics and the
/// expected normal scores; the p-value uses Royston's AS R94
/// transformation. Returns `(W, p)`.
pub fn shapiro_wilk(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if !(3..=50).contains(&n) {
        return Err(Error::UnsupportedSize { n, min: 3, max: 50 });
    }
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("samples must not be NaN"));
    if x[n - 1] - x[0] < 1e-15 {
        return Err(invalid_input("constant sample has no normality statistic"));
    }

    let coef = sw_coefficients(n);

    let xbar = x.iter().sum::<f64>() / n as f64;
    let mut ssx = 0.0;
    let mut ssa = 0.0;
    let mut sax = 0.0;
    for i in 0..n {
        let dx = x[i] - xbar;
        ssx += dx * dx;
        ssa += coef[i] * coef[i];
        sax += coef[i] * dx;
    }
    // 1 - W computed directly to keep precision near W = 1.
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(0.0, 1.0);

    Ok((w, sw_p_value(w, n)))
}

/// Normalized coefficients for the n order statistics (antisymmetric:
/// `c[i] = -c[n-1-i]`).
fn sw_coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    let mut a = vec![0.0; nn2];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        // Expected normal order statistics via Blom's approximation.
        let an25 = n as f64 + 0.25;
        let mut summ2 = 0.0;
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = normal::inverse_cdf((i as f64 + 1.0 - 0.375) / an25);
            summ2 += *ai * *ai;
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / (n as f64).sqrt();

        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - a[0] / ssumm2;
        let (start, fac) = if n > 5 {
            let a2 = -a[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * a[0] * a[0] - 2.0 * a[1] * a[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * a[0] * a[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for ai in a.iter_mut().skip(start) {
            *ai /= -fac;
        }
    }

    // a[i] is negative of the coefficient of the i-th smallest observation.
    let mut coef = vec![0.0; n];
    for (i, &ai) in a.iter().enumerate() {
        coef[i] = -ai;
        coef[n - 1 - i] = ai;
    }
    coef
}

fn sw_p_value(w: f64, n: usize) -> f64 {
    if w >= 1.0 {
        return 1.0;
    }
    if n == 3 {
        const SIX_OVER_PI: f64 = 1.909859317102744;
        let stqr = (0.75f64).sqrt().asin();
        return (SIX_OVER_PI * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0);
    }
    let an = n as f64;
    let y = (1.0 - w).ln();
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -0.0006714];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    let (z, mu, sigma) = if n <= 11 {
        let gamma = -2.273 + 0.459 * an;
        if y >= gamma {
            return 1e-99;
        }
        let y2 = -(gamma - y).ln();
        (y2, poly(&C3, an), poly(&C4, an).exp())
    } else {
        let lnn = an.ln();
        (y, poly(&C5, lnn), poly(&C6, lnn).exp())
    };
    1.0 - normal::cdf((z - mu) / sigma)
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Mean absolute percentage error of predictions against nonzero truths.
pub fn mape(truths: &[f64], predictions: &[f64]) -> Result<f64> {
    if truths.is_empty() || truths.len() != predictions.len() {
        return Err(invalid_input(format!(
            "need matching non-empty vectors, got {} truths and {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let mut total = 0.0;
    for (&t, &p) in truths.iter().zip(predictions) {
        if t == 0.0 {
            return Err(invalid_input("MAPE undefined for a zero truth"));
        }
        total += (t - p).abs() / t.abs();
    }
    Ok(total / truths.len() as f64)
}

/// Top-down benchmark: each category predicts its past-4-period moving
/// average; categories combine weighted by their amounts at the target
/// date. Histories are chronological, oldest first.
pub fn top_down_baseline(category_histories: &[Vec<f64>], amounts: &[f64]) -> Result<f64> {
    if category_histories.is_empty() || category_histories.len() != amounts.len() {
        return Err(invalid_input(format!(
            "{} category histories but {} amounts",
            category_histories.len(),
            amounts.len()
        )));
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (history, &amount) in category_histories.iter().zip(amounts) {
        if history.len() < 4 {
            return Err(invalid_input(format!(
                "need at least 4 past periods, got {}",
                history.len()
            )));
        }
        if !(amount > 0.0) {
            return Err(invalid_input("amounts must be positive"));
        }
        let pred = history[history.len() - 4..].iter().sum::<f64>() / 4.0;
        weighted += pred * amount;
        total += amount;
    }
    Ok(weighted / total)
}

/// One evaluated date: realized rate against the simulated distribution.
pub struct DateOutcome<'a> {
    pub date_index: u32,
    pub realized: f64,
    pub draws: &'a [f64],
    pub stats: SummaryStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub date_index: u32,
    pub realized: f64,
    pub predicted_mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub pit: f64,
    pub score: f64,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    /// `(W, p)` of the calibration scores, when computable.
    pub w_test: Option<(f64, f64)>,
    /// Why the W-test is absent (fewer than 8 dates, or a degenerate score
    /// sample).
    pub w_test_skipped: Option<String>,
    pub mape: f64,
    pub baseline_mape: Option<f64>,
}

/// Scores a full run: per-date randomized PIT, normality of the transformed
/// scores (when at least 8 dates are available), MAPE of the simulated
/// means, and optionally the top-down baseline's MAPE on the same dates.
pub fn evaluate_run(
    outcomes: &[DateOutcome<'_>],
    baselines: Option<&[Option<f64>]>,
    pit_seed: u64,
) -> Result<EvaluationReport> {
    if outcomes.is_empty() {
        return Err(invalid_input("no dates to evaluate"));
    }
    if let Some(b) = baselines {
        if b.len() != outcomes.len() {
            return Err(invalid_input("baseline predictions must align with dates"));
        }
    }

    let mut rows = Vec::with_capacity(outcomes.len());
    for (i, outcome) in outcomes.iter().enumerate() {
        let u_prime = rng::uniform_open01(&mut rng::stream2(pit_seed, outcome.date_index, 0));
        let (u, score) = pit_value(outcome.draws, outcome.realized, u_prime)?;
        rows.push(ReportRow {
            date_index: outcome.date_index,
            realized: outcome.realized,
            predicted_mean: outcome.stats.mean,
            std: outcome.stats.std,
            skewness: outcome.stats.skewness,
            kurtosis: outcome.stats.kurtosis,
            pit: u,
            score,
            baseline: baselines.and_then(|b| b[i]),
        });
    }

    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let (w_test, w_test_skipped) = if scores.len() < 8 {
        (
            None,
            Some(format!(
                "skipped: {} dates, W-test needs at least 8",
                scores.len()
            )),
        )
    } else {
        match shapiro_wilk(&scores) {
            Ok(wp) => (Some(wp), None),
            Err(err) => (None, Some(format!("skipped: {err}"))),
        }
    };

    let truths: Vec<f64> = rows.iter().map(|r| r.realized).collect();
    let preds: Vec<f64> = rows.iter().map(|r| r.predicted_mean).collect();
    let mape_value = mape(&truths, &preds)?;

    let baseline_mape = {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.baseline.map(|b| (r.realized, b)))
            .collect();
        if pairs.is_empty() {
            None
        } else {
            let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            Some(mape(&t, &b)?)
        }
    };

    Ok(EvaluationReport {
        rows,
        w_test,
        w_test_skipped,
        mape: mape_value,
        baseline_mape,
    })
}

/// Writes the report as a fixed-layout text table.
pub fn render_report(
    report: &EvaluationReport,
    timestamp_unix: Option<u64>,
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "evaluation-report-v1")?;
    if let Some(ts) = timestamp_unix {
        writeln!(out, "generated_at_unix = {ts}")?;
    }
    writeln!(out, "dates = {}", report.rows.len())?;
    match (&report.w_test, &report.w_test_skipped) {
        (Some((w, p)), _) => {
            writeln!(out, "w_statistic = {w:.6}")?;
            writeln!(out, "p_value = {p:.6}")?;
        }
        (None, Some(reason)) => writeln!(out, "w_test = {reason}")?,
        (None, None) => writeln!(out, "w_test = skipped")?,
    }
    writeln!(out, "mape = {:.6}", report.mape)?;
    if let Some(b) = report.baseline_mape {
        writeln!(out, "baseline_mape = {b:.6}")?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "date", "truth", "mean", "std", "skewness", "kurtosis", "pit", "score", "baseline"
    )?;
    for r in &report.rows {
        let baseline = match r.baseline {
            Some(b) => format!("{b:.6}"),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{:>5} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10}",
            r.date_index,
            r.realized,
            r.predicted_mean,
            r.std,
            r.skewness,
            r.kurtosis,
            r.pit,
            r.score,
            baseline
        )?;
    }
    Ok(())
}
