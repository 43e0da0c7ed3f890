//! Method-of-moments estimation of the common factor and category loadings
//! from realized repayment data.
//!
//! Conditional on the date's factor realization `m`, scores within a
//! category are i.i.d. with mean `beta * m` and variance `1 - beta^2`.
//! Matching those moments across all categories jointly yields `2J`
//! equations for `J + 1` unknowns; the (generally unsolvable) system is
//! replaced by a squared-loss minimization. The randomized transform adds
//! noise, so the whole estimation is repeated and averaged.

use crate::copula::{rand_pit, FactorParams};
use crate::error::{invalid_input, Result};
use crate::marginal::RateDistribution;
use crate::normal;
use crate::rng;

/// Per-category score moments at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMoments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased variance (divisor `count - 1`); `None` when `count < 2`,
    /// in which case the category contributes only its mean equation.
    pub variance: Option<f64>,
}

/// Empirical first and second score moments per category at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub date_index: u32,
    pub categories: Vec<CategoryMoments>,
}

/// Options for the moment fit.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Weight each category's equations by its loan count. Off by default:
    /// the squared loss sums equations unweighted.
    pub count_weighted: bool,
}

/// Reduces per-category Gaussian scores to their empirical moments.
pub fn empirical_moments(scores_by_category: &[Vec<f64>], date_index: u32) -> Result<MomentSummary> {
    if scores_by_category.is_empty() {
        return Err(invalid_input("no categories"));
    }
    let mut categories = Vec::with_capacity(scores_by_category.len());
    for (j, scores) in scores_by_category.iter().enumerate() {
        if scores.is_empty() {
            return Err(invalid_input(format!(
                "category {} has no scores at date {date_index}",
                j + 1
            )));
        }
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let variance = if n >= 2 {
            let ss: f64 = scores.iter().map(|v| (v - mean) * (v - mean)).sum();
            Some(ss / (n - 1) as f64)
        } else {
            None
        };
        categories.push(CategoryMoments {
            count: n,
            mean,
            variance,
        });
    }
    Ok(MomentSummary {
        date_index,
        categories,
    })
}

/// Fits `(m, beta_1..beta_J)` to a date's moments by minimizing
///
/// `sum_j (beta_j m - mean_j)^2 + sum_j (1 - beta_j^2 - var_j)^2`
///
/// subject to `beta_j` in [0, 1]. Deterministic initialization
/// (`beta_j = sqrt(max(0, 1 - var_j))`, `m` from the mean equations)
/// followed by exact coordinate descent; each coordinate subproblem is a
/// cubic solved in closed form, so the objective never increases.
pub fn fit_factor_params(summary: &MomentSummary) -> Result<FactorParams> {
    fit_factor_params_with(summary, &FitOptions::default())
}

pub fn fit_factor_params_with(summary: &MomentSummary, options: &FitOptions) -> Result<FactorParams> {
    let cats = &summary.categories;
    if !cats.iter().any(|c| c.variance.is_some()) {
        return Err(invalid_input(
            "need at least one category with a valid variance",
        ));
    }

    let weights: Vec<f64> = if options.count_weighted {
        let mean_count = cats.iter().map(|c| c.count as f64).sum::<f64>() / cats.len() as f64;
        cats.iter().map(|c| c.count as f64 / mean_count).collect()
    } else {
        vec![1.0; cats.len()]
    };

    // Deterministic start: loadings from the variance equations, factor
    // from the mean equations.
    let mut betas: Vec<f64> = cats
        .iter()
        .map(|c| match c.variance {
            Some(v) => (1.0 - v).max(0.0).sqrt().min(1.0),
            None => 0.0,
        })
        .collect();
    let mut m = solve_m(&betas, cats, &weights);

    let mut obj = objective(m, &betas, cats, &weights);
    for _ in 0..200 {
        m = solve_m(&betas, cats, &weights);
        for j in 0..betas.len() {
            betas[j] = best_beta(m, &cats[j], weights[j], betas[j]);
        }
        let next = objective(m, &betas, cats, &weights);
        let improved = obj - next;
        obj = next;
        if improved < 1e-10 {
            break;
        }
    }

    let degenerate = betas.iter().all(|&b| b < 1e-12);
    if degenerate {
        m = 0.0;
    }
    let mut params = FactorParams::new(summary.date_index, m, betas)?;
    params.degenerate = degenerate;
    Ok(params)
}

fn objective(m: f64, betas: &[f64], cats: &[CategoryMoments], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((b, c), w) in betas.iter().zip(cats).zip(weights) {
        let rm = b * m - c.mean;
        total += w * rm * rm;
        if let Some(var) = c.variance {
            let rv = 1.0 - b * b - var;
            total += w * rv * rv;
        }
    }
    total
}

/// Exact minimizer of the mean equations in `m` for fixed loadings.
fn solve_m(betas: &[f64], cats: &[CategoryMoments], weights: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((b, c), w) in betas.iter().zip(cats).zip(weights) {
        num += w * b * c.mean;
        den += w * b * b;
    }
    if den < 1e-12 {
        0.0
    } else {
        num / den
    }
}

/// Exact minimizer over `beta` in [0, 1] of one category's contribution,
/// for fixed `m`. Interior stationary points are roots of a depressed
/// cubic; they compete with the endpoints.
fn best_beta(m: f64, cat: &CategoryMoments, w: f64, current: f64) -> f64 {
    let f = |b: f64| {
        let rm = b * m - cat.mean;
        let mut val = w * rm * rm;
        if let Some(var) = cat.variance {
            let rv = 1.0 - b * b - var;
            val += w * rv * rv;
        }
        val
    };

    let mut candidates = vec![0.0, 1.0];
    match cat.variance {
        None => {
            // Mean equation only: quadratic in beta.
            if m.abs() > 1e-12 {
                candidates.push((cat.mean / m).clamp(0.0, 1.0));
            } else {
                return current; // no information; keep the loading
            }
        }
        Some(var) => {
            // f'(beta) = 0  <=>  beta^3 + p beta + q = 0
            let p = (m * m - 2.0 * (1.0 - var)) / 2.0;
            let q = -(m * cat.mean) / 2.0;
            for root in depressed_cubic_roots(p, q) {
                if (0.0..=1.0).contains(&root) {
                    candidates.push(root);
                }
            }
        }
    }

    let mut best = candidates[0];
    let mut best_val = f(best);
    for &b in &candidates[1..] {
        let val = f(b);
        if val < best_val || (val == best_val && b < best) {
            best = b;
            best_val = val;
        }
    }
    best
}

/// Real roots of `t^3 + p t + q = 0`.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    if p == 0.0 && q == 0.0 {
        return vec![0.0];
    }
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    if disc > 0.0 {
        // One real root.
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        vec![u + v]
    } else if disc == 0.0 {
        if p == 0.0 {
            vec![0.0]
        } else {
            vec![3.0 * q / p, -3.0 * q / (2.0 * p)]
        }
    } else {
        // Three real roots (p < 0 here).
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt();
        let theta = arg.clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| r * ((theta - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos())
            .collect()
    }
}

/// One labeled loan ready for score reconstruction.
pub struct LabeledLoan<'a, D: RateDistribution> {
    /// 1-based category index.
    pub category: usize,
    pub realized_rate: f64,
    pub marginal: &'a D,
}

/// All labeled loans observed at one date.
pub struct DateSample<'a, D: RateDistribution> {
    pub date_index: u32,
    pub loans: Vec<LabeledLoan<'a, D>>,
}

/// A date's averaged fit plus the individual repetitions behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedFit {
    pub averaged: FactorParams,
    pub repetitions: Vec<FactorParams>,
}

/// Runs the whole estimation `repetitions` times with fresh randomized
/// transforms and averages the fitted parameters, reducing the noise the
/// gap-filling uniforms inject. Each repetition of each date reads its own
/// stream of `seed`, so results do not depend on scheduling.
pub fn estimate_with_averaging<D: RateDistribution>(
    dates: &[DateSample<'_, D>],
    num_categories: usize,
    repetitions: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<Vec<AveragedFit>> {
    if repetitions == 0 {
        return Err(invalid_input("repetitions must be at least 1"));
    }
    if num_categories == 0 {
        return Err(invalid_input("need at least one category"));
    }
    let mut fits = Vec::with_capacity(dates.len());
    for date in dates {
        for loan in &date.loans {
            if loan.category < 1 || loan.category > num_categories {
                return Err(invalid_input(format!(
                    "loan category {} outside 1..={num_categories}",
                    loan.category
                )));
            }
        }
        let mut reps = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let mut rng = rng::stream2(seed, date.date_index, rep as u32);
            let mut scores: Vec<Vec<f64>> = vec![Vec::new(); num_categories];
            for loan in &date.loans {
                let u_prime = rng::uniform_open01(&mut rng);
                let u = rand_pit(loan.realized_rate, loan.marginal, u_prime);
                scores[loan.category - 1].push(normal::inverse_cdf(u));
            }
            let summary = empirical_moments(&scores, date.date_index)?;
            reps.push(fit_factor_params_with(&summary, options)?);
        }

        let j = num_categories;
        let mut mean_m = 0.0;
        let mut mean_betas = vec![0.0; j];
        for fit in &reps {
            mean_m += fit.m;
            for (acc, b) in mean_betas.iter_mut().zip(&fit.betas) {
                *acc += b;
            }
        }
        mean_m /= repetitions as f64;
        for b in &mut mean_betas {
            *b /= repetitions as f64;
        }
        // Individual repetitions may collapse to zero loadings at their
        // randomization; the date is unidentified only if the average does.
        let degenerate = mean_betas.iter().all(|&b| b < 1e-12);
        let mut averaged = FactorParams::new(date.date_index, mean_m, mean_betas)?;
        averaged.degenerate = degenerate;
        fits.push(AveragedFit {
            averaged,
            repetitions: reps,
        });
    }
    Ok(fits)
}

/// One persisted factor fit; `predicted` marks dates whose loadings come
/// from the historical average rather than an estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FactorFileEntry {
    pub date_index: u32,
    pub m: f64,
    pub betas: Vec<f64>,
    pub degenerate: bool,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FactorParamsFile {
    pub format: String,
    pub repetitions: usize,
    pub dates: Vec<FactorFileEntry>,
}

pub const FACTOR_PARAMS_FORMAT: &str = "factor-params-v1";

pub fn save_factor_params(path: &std::path::Path, file: &FactorParamsFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)
        .map_err(|e| invalid_input(format!("factor params serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_factor_params(path: &std::path::Path) -> Result<FactorParamsFile> {
    let text = std::fs::read_to_string(path)?;
    let file: FactorParamsFile = serde_json::from_str(&text)
        .map_err(|e| crate::error::Error::Schema(format!("{}: {e}", path.display())))?;
    if file.format != FACTOR_PARAMS_FORMAT {
        return Err(crate::error::Error::Schema(format!(
            "unsupported factor params format {:?}",
            file.format
        )));
    }
    Ok(file)
}

/// Predicts loadings for a date with no estimate yet: the per-category
/// arithmetic mean over the historical fits.
pub fn predict_beta_for_new_date(history: &[FactorParams]) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(invalid_input("empty estimation history"));
    }
    let j = history[0].betas.len();
    if history.iter().any(|h| h.betas.len() != j) {
        return Err(invalid_input("inconsistent category counts in history"));
    }
    let mut betas = vec![0.0; j];
    for fit in history {
        for (acc, b) in betas.iter_mut().zip(&fit.betas) {
            *acc += b;
        }
    }
    for b in &mut betas {
        *b /= history.len() as f64;
    }
    Ok(betas)
}
