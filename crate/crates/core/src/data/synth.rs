use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{LoanRecord, Portfolio, R_MAX};
use crate::error::{invalid_input, Error, Result};
use crate::marginal::RateDistribution;
use crate::normal;
use crate::rng;

/// Zero-repayment probability: `P(r = 0 | x) = sigmoid(w'x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Positive part: `r = min(r_max, exp(w'x + sigma * z) * scale)` with z the
/// rescaled Gaussian score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalBody {
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub scale: f64,
}

/// Configuration of the synthetic loan-book generator. The generative
/// process mirrors the model: a shared Gaussian factor per date, one
/// loading per category, and zero-inflated log-normal conditional laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_categories: usize,
    pub feature_dim: usize,
    pub loans_per_category: usize,
    pub num_dates: usize,
    /// One loading per category, each in [0, 1).
    pub true_betas: Vec<f64>,
    pub zero_inflation: Vec<LogisticParams>,
    pub continuous_part: Vec<LogNormalBody>,
    /// Shift added to the first feature per elapsed date: `drift * (t - 1)`.
    /// Makes the marginals drift over time through the features.
    pub feature_drift: f64,
    pub seed: u64,
}

impl DatasetConfig {
    /// A ready-to-use configuration with deterministic coefficient sets:
    /// deeper overdue categories repay zero more often and recover less.
    pub fn balanced(
        num_categories: usize,
        feature_dim: usize,
        loans_per_category: usize,
        num_dates: usize,
        true_betas: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut param_rng = rng::stream(seed, u64::MAX);
        let spread = 1.0 / (feature_dim.max(1) as f64).sqrt();
        let steps = (num_categories.max(2) - 1) as f64;
        let mut zero_inflation = Vec::with_capacity(num_categories);
        let mut continuous_part = Vec::with_capacity(num_categories);
        for j in 0..num_categories {
            let weights = (0..feature_dim)
                .map(|_| param_rng.random_range(-0.6..0.6) * spread)
                .collect();
            zero_inflation.push(LogisticParams {
                weights,
                bias: -0.8 + 1.4 * j as f64 / steps,
            });
            let mut weights: Vec<f64> = (0..feature_dim)
                .map(|_| param_rng.random_range(-0.5..0.5) * spread)
                .collect();
            // Fixed positive weight on the first feature so a configured
            // feature drift translates into a rate trend.
            weights[0] = 0.25;
            continuous_part.push(LogNormalBody {
                weights,
                sigma: 0.5,
                scale: 0.45 * (1.0 - 0.4 * j as f64 / steps),
            });
        }
        let cfg = Self {
            num_categories,
            feature_dim,
            loans_per_category,
            num_dates,
            true_betas,
            zero_inflation,
            continuous_part,
            feature_drift: 0.0,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_categories == 0
            || self.feature_dim == 0
            || self.loans_per_category == 0
            || self.num_dates == 0
        {
            return Err(invalid_input("all counts must be positive"));
        }
        if self.true_betas.len() != self.num_categories {
            return Err(invalid_input(format!(
                "{} loadings for {} categories",
                self.true_betas.len(),
                self.num_categories
            )));
        }
        if self.true_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(invalid_input("true loadings must lie in [0, 1)"));
        }
        if self.zero_inflation.len() != self.num_categories
            || self.continuous_part.len() != self.num_categories
        {
            return Err(invalid_input("need one parameter set per category"));
        }
        for p in &self.zero_inflation {
            if p.weights.len() != self.feature_dim {
                return Err(invalid_input("zero-inflation weights must match feature_dim"));
            }
        }
        for p in &self.continuous_part {
            if p.weights.len() != self.feature_dim {
                return Err(invalid_input("continuous-part weights must match feature_dim"));
            }
            if !(p.sigma > 0.0) || !(p.scale > 0.0) {
                return Err(invalid_input("sigma and scale must be positive"));
            }
        }
        Ok(())
    }
}

/// A loan's true conditional law: atom `p0` at zero, log-normal body with
/// location `mu` and shape `sigma`, capped at `R_MAX` (the cap carries the
/// clipped upper-tail mass as an atom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueMarginal {
    pub p0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl RateDistribution for TrueMarginal {
    fn cdf_plus(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else if y >= R_MAX {
            1.0
        } else if y == 0.0 {
            self.p0
        } else {
            self.p0 + (1.0 - self.p0) * normal::cdf((y.ln() - self.mu) / self.sigma)
        }
    }

    fn cdf_minus(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else if y > R_MAX {
            1.0
        } else {
            self.p0 + (1.0 - self.p0) * normal::cdf((y.ln() - self.mu) / self.sigma)
        }
    }

    fn quantile_raw(&self, tau: f64) -> f64 {
        if tau <= self.p0 {
            return 0.0;
        }
        let body = (tau - self.p0) / (1.0 - self.p0);
        (self.mu + self.sigma * normal::inverse_cdf(body)).exp().min(R_MAX)
    }

    fn support_bounds(&self) -> (f64, f64) {
        (0.0, R_MAX)
    }
}

/// Latent state behind one generated loan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanTruth {
    pub loan_id: String,
    pub date_index: u32,
    pub category: usize,
    /// Gaussian score that produced the realized rate.
    pub score: f64,
    pub marginal: TrueMarginal,
}

/// Everything the generator knows that a model must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub factor_by_date: Vec<(u32, f64)>,
    pub betas: Vec<f64>,
    pub loans: Vec<LoanTruth>,
}

impl GroundTruth {
    pub fn factor_at(&self, date_index: u32) -> Option<f64> {
        self.factor_by_date
            .iter()
            .find(|(t, _)| *t == date_index)
            .map(|(_, m)| *m)
    }
}

/// Draws the synthetic loan book. Deterministic in `cfg`: every date and
/// category reads its own seeded stream.
pub fn generate_synthetic(cfg: &DatasetConfig) -> Result<(Vec<Portfolio>, GroundTruth)> {
    cfg.validate()?;
    let mut portfolios = Vec::with_capacity(cfg.num_dates);
    let mut truth = GroundTruth {
        factor_by_date: Vec::with_capacity(cfg.num_dates),
        betas: cfg.true_betas.clone(),
        loans: Vec::new(),
    };

    for t in 1..=cfg.num_dates as u32 {
        let m_t = rng::standard_normal(&mut rng::stream2(cfg.seed, t, 0));
        truth.factor_by_date.push((t, m_t));
        let drift = cfg.feature_drift * (t - 1) as f64;

        let mut loans = Vec::with_capacity(cfg.num_categories * cfg.loans_per_category);
        for j in 1..=cfg.num_categories {
            let beta = cfg.true_betas[j - 1];
            let zi = &cfg.zero_inflation[j - 1];
            let body = &cfg.continuous_part[j - 1];
            let mut loan_rng = rng::stream2(cfg.seed, t, j as u32);

            for i in 0..cfg.loans_per_category {
                let mut x: Vec<f64> = (0..cfg.feature_dim)
                    .map(|_| rng::standard_normal(&mut loan_rng))
                    .collect();
                x[0] += drift;

                let z = rng::standard_normal(&mut loan_rng);
                let v = beta * m_t + (1.0 - beta * beta).sqrt() * z;
                let u = normal::cdf(v).clamp(1e-12, 1.0 - 1e-12);

                let p0 = sigmoid(dot(&zi.weights, &x) + zi.bias);
                let mu = dot(&body.weights, &x) + body.scale.ln();
                let marginal = TrueMarginal {
                    p0,
                    mu,
                    sigma: body.sigma,
                };
                let rate = marginal.quantile_raw(u);
                let amount = 500.0 + 4500.0 * rng::uniform_open01(&mut loan_rng);

                let loan_id = format!("L{t}-{j}-{i}");
                truth.loans.push(LoanTruth {
                    loan_id: loan_id.clone(),
                    date_index: t,
                    category: j,
                    score: v,
                    marginal,
                });
                loans.push(LoanRecord::new(loan_id, t, j, x, amount, Some(rate))?);
            }
        }
        portfolios.push(Portfolio::new(t, loans)?);
    }
    Ok((portfolios, truth))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// What the ground-truth file records: the factor path and the loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub format: String,
    pub factor_by_date: Vec<(u32, f64)>,
    pub betas: Vec<f64>,
}

pub const GROUND_TRUTH_FORMAT: &str = "ground-truth-v1";

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let file = GroundTruthFile {
        format: GROUND_TRUTH_FORMAT.to_string(),
        factor_by_date: truth.factor_by_date.clone(),
        betas: truth.betas.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| invalid_input(format!("ground truth serialization failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = fs::read_to_string(path)?;
    let file: GroundTruthFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if file.format != GROUND_TRUTH_FORMAT {
        return Err(Error::Schema(format!(
            "unsupported ground truth format {:?}",
            file.format
        )));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(betas: Vec<f64>, loans: usize, dates: usize, seed: u64) -> DatasetConfig {
        DatasetConfig::balanced(betas.len(), 4, loans, dates, betas, seed).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg(vec![0.3, 0.6], 50, 3, 42);
        let (a, ta) = generate_synthetic(&cfg).unwrap();
        let (b, tb) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let other = DatasetConfig {
            seed: 43,
            ..cfg
        };
        let (c, _) = generate_synthetic(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shapes_match_config() {
        let cfg = small_cfg(vec![0.2, 0.4, 0.8], 25, 4, 9);
        let (portfolios, truth) = generate_synthetic(&cfg).unwrap();
        assert_eq!(portfolios.len(), 4);
        for p in &portfolios {
            assert_eq!(p.loans.len(), 3 * 25);
        }
        assert_eq!(truth.loans.len(), 4 * 3 * 25);
        assert_eq!(truth.factor_by_date.len(), 4);
        for loan in truth.loans.iter().take(10) {
            assert!(loan.marginal.p0 > 0.0 && loan.marginal.p0 < 1.0);
        }
    }

    #[test]
    fn rates_are_valid_and_mixed() {
        let cfg = small_cfg(vec![0.5], 2000, 1, 7);
        let (portfolios, _) = generate_synthetic(&cfg).unwrap();
        let rates: Vec<f64> = portfolios[0]
            .loans
            .iter()
            .map(|l| l.realized_rate.unwrap())
            .collect();
        assert!(rates.iter().all(|&r| (0.0..=R_MAX).contains(&r)));
        let zeros = rates.iter().filter(|&&r| r == 0.0).count();
        assert!(zeros > 100, "expected a real atom at zero, got {zeros}");
        assert!(rates.iter().any(|&r| r > 0.0));
    }

    #[test]
    fn zero_fraction_matches_average_conditional_probability() {
        // beta = 0 so a single date's factor draw cannot tilt the atom
        // frequency away from the feature-averaged probability.
        let cfg = small_cfg(vec![0.0], 10_000, 1, 11);
        let (portfolios, truth) = generate_synthetic(&cfg).unwrap();
        let zeros = portfolios[0]
            .loans
            .iter()
            .filter(|l| l.realized_rate.unwrap() == 0.0)
            .count();
        let observed = zeros as f64 / portfolios[0].loans.len() as f64;
        let expected: f64 =
            truth.loans.iter().map(|l| l.marginal.p0).sum::<f64>() / truth.loans.len() as f64;
        assert!(
            (observed - expected).abs() < 0.02,
            "zero fraction {observed} vs mean p0 {expected}"
        );
    }

    #[test]
    fn zero_loading_decouples_scores() {
        let cfg = small_cfg(vec![0.0], 4000, 2, 5);
        let (_, truth) = generate_synthetic(&cfg).unwrap();
        // Pairwise score products within a date average to ~0.
        for t in [1u32, 2] {
            let scores: Vec<f64> = truth
                .loans
                .iter()
                .filter(|l| l.date_index == t)
                .map(|l| l.score)
                .collect();
            let n = scores.len() as f64;
            let s: f64 = scores.iter().sum();
            let q: f64 = scores.iter().map(|v| v * v).sum();
            let pair_mean = (s * s - q) / (n * (n - 1.0));
            assert!(pair_mean.abs() < 0.05, "date {t}: pair mean {pair_mean}");
        }
    }

    #[test]
    fn near_unit_loading_is_near_comonotone() {
        // Flat conditional laws (zero weights) + beta near 1: rates within a
        // date collapse onto each other.
        let mut cfg = small_cfg(vec![0.999], 200, 3, 13);
        for p in &mut cfg.zero_inflation {
            p.weights = vec![0.0; 4];
            p.bias = -1.0;
        }
        for p in &mut cfg.continuous_part {
            p.weights = vec![0.0; 4];
        }
        let (portfolios, _) = generate_synthetic(&cfg).unwrap();
        let mut date_means = Vec::new();
        for p in &portfolios {
            let rates: Vec<f64> = p.loans.iter().map(|l| l.realized_rate.unwrap()).collect();
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            let var =
                rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rates.len() as f64;
            date_means.push(mean);
            assert!(var.sqrt() < 0.08, "within-date spread {}", var.sqrt());
        }
        // across dates the level still moves with the factor
        let spread = date_means
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            - date_means.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.01, "dates should differ, spread {spread}");
    }

    #[test]
    fn within_category_score_correlation_approximates_beta_squared() {
        // Mean pairwise score product within a date is beta^2 * m_t^2, so
        // dividing the pooled pair products by the realized mean of m_t^2
        // (known from the ground truth) recovers beta^2. With only 12 dates
        // the unadjusted correlation would carry the sampling noise of the
        // factor path itself.
        let cfg = DatasetConfig::balanced(3, 4, 2000, 12, vec![0.3, 0.5, 0.7], 7).unwrap();
        let (_, truth) = generate_synthetic(&cfg).unwrap();
        let mean_m2: f64 = truth
            .factor_by_date
            .iter()
            .map(|(_, m)| m * m)
            .sum::<f64>()
            / truth.factor_by_date.len() as f64;
        for (j, &beta) in truth.betas.iter().enumerate() {
            let mut pair_sum = 0.0;
            let mut pair_count = 0.0;
            for (t, _) in &truth.factor_by_date {
                let scores: Vec<f64> = truth
                    .loans
                    .iter()
                    .filter(|l| l.date_index == *t && l.category == j + 1)
                    .map(|l| l.score)
                    .collect();
                let n = scores.len() as f64;
                let s: f64 = scores.iter().sum();
                let q: f64 = scores.iter().map(|v| v * v).sum();
                pair_sum += s * s - q;
                pair_count += n * (n - 1.0);
            }
            let corr = pair_sum / pair_count / mean_m2;
            assert!(
                (corr - beta * beta).abs() < 0.05,
                "category {}: corr {corr} vs beta^2 {}",
                j + 1,
                beta * beta
            );
        }
    }

    #[test]
    fn true_marginal_round_trips() {
        let dist = TrueMarginal {
            p0: 0.35,
            mu: -1.1,
            sigma: 0.6,
        };
        let mut rng = rng::stream(3, 1);
        for _ in 0..1000 {
            let w = rng::uniform_open01(&mut rng);
            let u_prime = rng::uniform_open01(&mut rng);
            let y = dist.quantile_raw(w);
            let u = crate::copula::rand_pit(y, &dist, u_prime);
            let back = crate::copula::inverse_pit(u, &dist);
            assert!((back - y).abs() < 1e-9, "{y} -> {u} -> {back}");
        }
    }

    #[test]
    fn ground_truth_file_roundtrip() {
        let cfg = small_cfg(vec![0.3], 5, 2, 1);
        let (_, truth) = generate_synthetic(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("nplrisk-gt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truth.json");
        write_ground_truth(&path, &truth).unwrap();
        let loaded = load_ground_truth(&path).unwrap();
        assert_eq!(loaded.betas, truth.betas);
        assert_eq!(loaded.factor_by_date, truth.factor_by_date);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_validation_catches_bad_loadings() {
        assert!(DatasetConfig::balanced(2, 4, 10, 2, vec![0.3, 1.0], 1).is_err());
        assert!(DatasetConfig::balanced(2, 4, 10, 2, vec![0.3], 1).is_err());
        let mut cfg = small_cfg(vec![0.3], 10, 2, 1);
        cfg.loans_per_category = 0;
        assert!(cfg.validate().is_err());
    }
}
