use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use npl_risk::data::SplitSpec;
use npl_risk::domain::CategoryScheme;
use npl_risk::marginal::{ModelVariant, TrainConfig};

/// One TOML document drives every subcommand. Every seed is explicit;
/// nothing is seeded from the clock.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub categories: Categories,
    pub model: ModelSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub estimation: EstimationSection,
    pub simulation: SimulationSection,
    pub evaluation: EvaluationSection,
    pub generate: Option<GenerateSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Categories {
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// CL | CLNN2 | CLNN4 | CLNN6
    pub variant: String,
    /// Number of quantile levels, spread regularly over (0, 1).
    #[serde(default = "default_num_taus")]
    pub num_taus: usize,
}

fn default_num_taus() -> usize {
    99
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub batch_size: Option<usize>,
    pub seed: u64,
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_iterations() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    #[serde(default)]
    pub holdout_dates: Vec<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub count_weighted: bool,
    pub seed: u64,
}

fn default_repetitions() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
    pub seed: u64,
}

fn default_n_sim() -> usize {
    1000
}

fn default_histogram_bins() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub pit_seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub feature_dim: usize,
    pub loans_per_category: usize,
    pub num_dates: usize,
    pub true_betas: Vec<f64>,
    #[serde(default)]
    pub feature_drift: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        self.variant()?;
        self.scheme()?;
        if self.model.num_taus == 0 {
            return Err("model.num_taus must be positive".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            return Err(format!(
                "split.train_fraction {} outside (0, 1]",
                self.split.train_fraction
            ));
        }
        if let Some(g) = &self.generate {
            if g.true_betas.len() != self.categories.labels.len() {
                return Err(format!(
                    "generate.true_betas has {} entries for {} categories",
                    g.true_betas.len(),
                    self.categories.labels.len()
                ));
            }
            if self.paths.ground_truth.is_none() {
                return Err("paths.ground_truth is required when [generate] is present".into());
            }
        }
        Ok(())
    }

    pub fn variant(&self) -> Result<ModelVariant, String> {
        ModelVariant::parse(&self.model.variant).map_err(|e| e.to_string())
    }

    pub fn scheme(&self) -> Result<CategoryScheme, String> {
        CategoryScheme::new(self.categories.labels.clone()).map_err(|e| e.to_string())
    }

    pub fn train_config(&self, variant: ModelVariant, category: usize) -> TrainConfig {
        TrainConfig {
            hidden_sizes: variant.hidden_sizes(),
            learning_rate: self.train.learning_rate,
            iterations: self.train.iterations,
            batch_size: self.train.batch_size,
            // decorrelate per-category initializations
            seed: self.train.seed.wrapping_add(category as u64),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            holdout_dates: self.split.holdout_dates.clone(),
        }
    }

    pub fn model_path(&self, category: usize) -> PathBuf {
        self.paths.models_dir.join(format!("category_{category}.json"))
    }

    pub fn factor_params_path(&self) -> PathBuf {
        self.paths.models_dir.join("factor_params.json")
    }

    pub fn sim_report_path(&self, date_index: u32) -> PathBuf {
        self.paths.reports_dir.join(format!("sim_t{date_index}.txt"))
    }

    pub fn sim_draws_path(&self, date_index: u32) -> PathBuf {
        self.paths
            .reports_dir
            .join(format!("sim_t{date_index}_draws.txt"))
    }

    pub fn evaluation_report_path(&self) -> PathBuf {
        self.paths.reports_dir.join("evaluation.txt")
    }
}
