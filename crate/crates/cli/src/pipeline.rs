use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use npl_risk::data::{self, DatasetConfig, SplitResult};
use npl_risk::domain::{portfolio_repayment_rate, LoanRecord, Portfolio};
use npl_risk::error::Error;
use npl_risk::estimation::{
    self, DateSample, FactorFileEntry, FactorParamsFile, FitOptions, LabeledLoan,
    FACTOR_PARAMS_FORMAT,
};
use npl_risk::evaluation::{self, DateOutcome};
use npl_risk::marginal::{
    self, predict_marginal, MarginalDistribution, ModelFile, MODEL_FORMAT,
};
use npl_risk::simulation::{self, PortfolioDistribution};

use crate::config::RunConfig;

/// Exit codes: 1 usage, 2 data/schema, 3 numerical failure.
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

fn data_err(err: Error) -> CliError {
    CliError::data(err.to_string())
}

type CliResult = Result<(), CliError>;

pub fn cmd_generate(cfg: &RunConfig) -> CliResult {
    let gen = cfg
        .generate
        .as_ref()
        .ok_or_else(|| CliError::usage("config has no [generate] section"))?;
    let scheme = cfg.scheme().map_err(CliError::usage)?;

    let mut dataset = DatasetConfig::balanced(
        scheme.num_categories(),
        gen.feature_dim,
        gen.loans_per_category,
        gen.num_dates,
        gen.true_betas.clone(),
        gen.seed,
    )
    .map_err(|e| CliError::usage(e.to_string()))?;
    dataset.feature_drift = gen.feature_drift;

    let (portfolios, truth) = data::generate_synthetic(&dataset).map_err(data_err)?;

    ensure_parent(&cfg.paths.data)?;
    data::write_loans(&cfg.paths.data, &portfolios).map_err(data_err)?;
    let truth_path = cfg.paths.ground_truth.as_ref().expect("validated");
    ensure_parent(truth_path)?;
    data::write_ground_truth(truth_path, &truth).map_err(data_err)?;

    let total: usize = portfolios.iter().map(|p| p.loans.len()).sum();
    println!(
        "generate: wrote {total} loans over {} dates to {}",
        portfolios.len(),
        cfg.paths.data.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult {
    let scheme = cfg.scheme().map_err(CliError::usage)?;
    let variant = cfg.variant().map_err(CliError::usage)?;
    let (_, split) = load_and_split(cfg)?;
    let tau_grid = marginal::default_tau_grid(cfg.model.num_taus);

    fs::create_dir_all(&cfg.paths.models_dir).map_err(|e| CliError::data(e.to_string()))?;

    let categories: Vec<usize> = (1..=scheme.num_categories()).collect();
    let models: Result<Vec<ModelFile>, CliError> = categories
        .par_iter()
        .map(|&j| {
            let records: Vec<LoanRecord> = split
                .train
                .iter()
                .flat_map(|p| p.loans.iter())
                .filter(|l| l.category == j && l.realized_rate.is_some())
                .cloned()
                .collect();
            if records.is_empty() {
                return Err(CliError::data(format!(
                    "no labeled training loans for category {j} ({})",
                    scheme.label(j).unwrap_or("?")
                )));
            }
            let train_config = cfg.train_config(variant, j);
            let params =
                marginal::train_category(&records, &tau_grid, &train_config).map_err(data_err)?;
            Ok(ModelFile {
                format: MODEL_FORMAT.to_string(),
                category: j,
                train_config,
                params,
            })
        })
        .collect();

    for model in models? {
        let path = cfg.model_path(model.category);
        marginal::save_model(&path, &model).map_err(data_err)?;
        println!("train: wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_fit_copula(cfg: &RunConfig, allow_degenerate: bool) -> CliResult {
    let scheme = cfg.scheme().map_err(CliError::usage)?;
    let j = scheme.num_categories();
    let (_, split) = load_and_split(cfg)?;
    let models = load_models(cfg, j)?;

    // One marginal per labeled training loan, grouped by date.
    let mut per_date: Vec<(u32, Vec<(usize, f64, MarginalDistribution)>)> = Vec::new();
    for portfolio in &split.train {
        let mut loans = Vec::with_capacity(portfolio.loans.len());
        for loan in &portfolio.loans {
            let Some(rate) = loan.realized_rate else {
                continue; // unlabeled loans carry no information here
            };
            loans.push((loan.category, rate, loan_marginal(loan, &models)?));
        }
        per_date.push((portfolio.date_index, loans));
    }

    let samples: Vec<DateSample<'_, MarginalDistribution>> = per_date
        .iter()
        .map(|(date_index, loans)| DateSample {
            date_index: *date_index,
            loans: loans
                .iter()
                .map(|(category, rate, marginal)| LabeledLoan {
                    category: *category,
                    realized_rate: *rate,
                    marginal,
                })
                .collect(),
        })
        .collect();

    let fits = estimation::estimate_with_averaging(
        &samples,
        j,
        cfg.estimation.repetitions,
        cfg.estimation.seed,
        &FitOptions {
            count_weighted: cfg.estimation.count_weighted,
        },
    )
    .map_err(data_err)?;

    let degenerate_dates: Vec<u32> = fits
        .iter()
        .filter(|f| f.averaged.degenerate)
        .map(|f| f.averaged.date_index)
        .collect();
    if !degenerate_dates.is_empty() && !allow_degenerate {
        return Err(CliError::numerical(format!(
            "degenerate factor fit at dates {degenerate_dates:?}; rerun with --allow-degenerate to proceed"
        )));
    }

    let mut entries: Vec<FactorFileEntry> = fits
        .iter()
        .map(|f| FactorFileEntry {
            date_index: f.averaged.date_index,
            m: f.averaged.m,
            betas: f.averaged.betas.clone(),
            degenerate: f.averaged.degenerate,
            predicted: false,
        })
        .collect();

    let mut holdout: Vec<u32> = cfg.split.holdout_dates.clone();
    holdout.sort_unstable();
    holdout.dedup();
    if !holdout.is_empty() {
        let history: Vec<_> = fits.iter().map(|f| f.averaged.clone()).collect();
        let betas = estimation::predict_beta_for_new_date(&history).map_err(data_err)?;
        for date_index in holdout {
            entries.push(FactorFileEntry {
                date_index,
                m: 0.0,
                betas: betas.clone(),
                degenerate: false,
                predicted: true,
            });
        }
    }

    let file = FactorParamsFile {
        format: FACTOR_PARAMS_FORMAT.to_string(),
        repetitions: cfg.estimation.repetitions,
        dates: entries,
    };
    fs::create_dir_all(&cfg.paths.models_dir).map_err(|e| CliError::data(e.to_string()))?;
    let path = cfg.factor_params_path();
    estimation::save_factor_params(&path, &file).map_err(data_err)?;
    println!("fit-copula: wrote {}", path.display());
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, timestamp: Option<u64>) -> CliResult {
    let scheme = cfg.scheme().map_err(CliError::usage)?;
    let (_, split) = load_and_split(cfg)?;
    let models = load_models(cfg, scheme.num_categories())?;
    let factor_file = estimation::load_factor_params(&cfg.factor_params_path()).map_err(|e| {
        CliError::data(format!("{e}; run fit-copula first"))
    })?;

    fs::create_dir_all(&cfg.paths.reports_dir).map_err(|e| CliError::data(e.to_string()))?;

    for portfolio in test_portfolios(&split) {
        let t = portfolio.date_index;
        let entry = factor_file
            .dates
            .iter()
            .find(|e| e.date_index == t)
            .ok_or_else(|| {
                CliError::data(format!("no factor parameters for date {t}; run fit-copula first"))
            })?;
        let params = npl_risk::copula::FactorParams {
            date_index: t,
            m: entry.m,
            betas: entry.betas.clone(),
            degenerate: entry.degenerate,
        };

        let mut marginals = Vec::with_capacity(portfolio.loans.len());
        let mut categories = Vec::with_capacity(portfolio.loans.len());
        let mut amounts = Vec::with_capacity(portfolio.loans.len());
        for loan in &portfolio.loans {
            marginals.push(loan_marginal(loan, &models)?);
            categories.push(loan.category);
            amounts.push(loan.expected_amount);
        }

        let dist = simulation::simulate_portfolio(
            t,
            &marginals,
            &categories,
            &amounts,
            &params,
            cfg.simulation.n_sim,
            cfg.simulation.seed,
        )
        .map_err(data_err)?;

        write_simulation_outputs(cfg, &dist, timestamp)?;
        println!(
            "simulate: date {t} mean {:.6} std {:.6} -> {}",
            dist.stats.mean,
            dist.stats.std,
            cfg.sim_report_path(t).display()
        );
    }
    Ok(())
}

fn write_simulation_outputs(
    cfg: &RunConfig,
    dist: &PortfolioDistribution,
    timestamp: Option<u64>,
) -> CliResult {
    let report_path = cfg.sim_report_path(dist.date_index);
    let file = File::create(&report_path).map_err(|e| CliError::data(e.to_string()))?;
    simulation::write_report(dist, cfg.simulation.histogram_bins, timestamp, BufWriter::new(file))
        .map_err(|e| CliError::data(e.to_string()))?;

    let draws_path = cfg.sim_draws_path(dist.date_index);
    let file = File::create(&draws_path).map_err(|e| CliError::data(e.to_string()))?;
    let mut out = BufWriter::new(file);
    for d in &dist.draws {
        writeln!(out, "{d}").map_err(|e| CliError::data(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::data(e.to_string()))?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, timestamp: Option<u64>) -> CliResult {
    let scheme = cfg.scheme().map_err(CliError::usage)?;
    let (_, split) = load_and_split(cfg)?;
    let portfolios = test_portfolios(&split);
    if portfolios.is_empty() {
        return Err(CliError::data("no test portfolios to evaluate"));
    }

    // Realized overall rate and per-category rates/amounts per date.
    let mut realized = Vec::new();
    let mut category_rates: Vec<BTreeMap<usize, f64>> = Vec::new();
    let mut category_amounts: Vec<BTreeMap<usize, f64>> = Vec::new();
    for portfolio in &portfolios {
        let mut rates = Vec::with_capacity(portfolio.loans.len());
        let mut amounts = Vec::with_capacity(portfolio.loans.len());
        let mut by_cat: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for loan in &portfolio.loans {
            let rate = loan.realized_rate.ok_or_else(|| {
                CliError::data(format!(
                    "loan {} at date {} has no realized rate; evaluation needs labels",
                    loan.id, portfolio.date_index
                ))
            })?;
            rates.push(rate);
            amounts.push(loan.expected_amount);
            let slot = by_cat.entry(loan.category).or_insert((0.0, 0.0));
            slot.0 += rate * loan.expected_amount;
            slot.1 += loan.expected_amount;
        }
        realized.push(portfolio_repayment_rate(&rates, &amounts).map_err(data_err)?);
        category_rates.push(by_cat.iter().map(|(&j, &(r, p))| (j, r / p)).collect());
        category_amounts.push(by_cat.iter().map(|(&j, &(_, p))| (j, p)).collect());
    }

    // Simulated draws written by the simulate step.
    let mut draws_by_date = Vec::new();
    for portfolio in &portfolios {
        draws_by_date.push(read_draws(&cfg.sim_draws_path(portfolio.date_index))?);
    }

    // Moving-average baseline: needs the previous four dates for every
    // category present at the target date.
    let all_categories: Vec<usize> = (1..=scheme.num_categories()).collect();
    let mut baselines: Vec<Option<f64>> = Vec::new();
    for i in 0..portfolios.len() {
        if i < 4 {
            baselines.push(None);
            continue;
        }
        let mut histories = Vec::new();
        let mut amounts = Vec::new();
        let mut complete = true;
        for &j in &all_categories {
            let Some(&amount) = category_amounts[i].get(&j) else {
                complete = false;
                break;
            };
            let history: Vec<f64> = (i - 4..i)
                .filter_map(|k| category_rates[k].get(&j).copied())
                .collect();
            if history.len() < 4 {
                complete = false;
                break;
            }
            histories.push(history);
            amounts.push(amount);
        }
        if complete {
            baselines.push(Some(
                evaluation::top_down_baseline(&histories, &amounts).map_err(data_err)?,
            ));
        } else {
            baselines.push(None);
        }
    }

    let mut outcomes = Vec::new();
    for (i, portfolio) in portfolios.iter().enumerate() {
        outcomes.push(DateOutcome {
            date_index: portfolio.date_index,
            realized: realized[i],
            draws: &draws_by_date[i],
            stats: simulation::summarize(&draws_by_date[i]).map_err(data_err)?,
        });
    }

    let report = evaluation::evaluate_run(&outcomes, Some(&baselines), cfg.evaluation.pit_seed)
        .map_err(data_err)?;

    fs::create_dir_all(&cfg.paths.reports_dir).map_err(|e| CliError::data(e.to_string()))?;
    let path = cfg.evaluation_report_path();
    let file = File::create(&path).map_err(|e| CliError::data(e.to_string()))?;
    evaluation::render_report(&report, timestamp, BufWriter::new(file))
        .map_err(|e| CliError::data(e.to_string()))?;

    match report.w_test {
        Some((w, p)) => println!("evaluate: W = {w:.4}, p = {p:.4}, MAPE = {:.4}", report.mape),
        None => println!(
            "evaluate: {} , MAPE = {:.4}",
            report.w_test_skipped.as_deref().unwrap_or("w-test skipped"),
            report.mape
        ),
    }
    if let Some(b) = report.baseline_mape {
        println!("evaluate: top-down baseline MAPE = {b:.4}");
    }
    println!("evaluate: wrote {}", path.display());
    Ok(())
}

pub fn cmd_run_all(cfg: &RunConfig, allow_degenerate: bool, timestamp: Option<u64>) -> CliResult {
    cmd_train(cfg)?;
    cmd_fit_copula(cfg, allow_degenerate)?;
    cmd_simulate(cfg, timestamp)?;
    cmd_evaluate(cfg, timestamp)
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::data(e.to_string()))?;
        }
    }
    Ok(())
}

fn load_and_split(cfg: &RunConfig) -> Result<(Vec<Portfolio>, SplitResult), CliError> {
    let portfolios = data::load_loans(&cfg.paths.data).map_err(data_err)?;
    let split = data::split(&portfolios, &cfg.split_spec(), cfg.split.seed).map_err(data_err)?;
    Ok((portfolios, split))
}

fn load_models(cfg: &RunConfig, num_categories: usize) -> Result<Vec<ModelFile>, CliError> {
    let mut models = Vec::with_capacity(num_categories);
    for j in 1..=num_categories {
        let path = cfg.model_path(j);
        let model = marginal::load_model(&path)
            .map_err(|e| CliError::data(format!("{e}; run train first")))?;
        if model.category != j {
            return Err(CliError::data(format!(
                "{} claims category {}, expected {j}",
                path.display(),
                model.category
            )));
        }
        models.push(model);
    }
    Ok(models)
}

fn loan_marginal(
    loan: &LoanRecord,
    models: &[ModelFile],
) -> Result<MarginalDistribution, CliError> {
    let model = models.get(loan.category - 1).ok_or_else(|| {
        CliError::data(format!(
            "no model for category {} (loan {})",
            loan.category, loan.id
        ))
    })?;
    predict_marginal(&model.params, &loan.features)
        .map_err(|e| CliError::data(format!("loan {}: {e}", loan.id)))
}

/// Overlap test portfolios followed by holdout portfolios, dates ascending.
fn test_portfolios(split: &SplitResult) -> Vec<Portfolio> {
    let mut portfolios: Vec<Portfolio> = split
        .test_overlap
        .iter()
        .chain(split.test_holdout.iter())
        .cloned()
        .collect();
    portfolios.sort_by_key(|p| p.date_index);
    portfolios
}

fn read_draws(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::data(format!("{}: {e}; run simulate first", path.display())))?;
    let mut draws = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::data(e.to_string()))?;
        let value: f64 = line.trim().parse().map_err(|e| {
            CliError::data(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        draws.push(value);
    }
    if draws.is_empty() {
        return Err(CliError::data(format!("{} holds no draws", path.display())));
    }
    Ok(draws)
}
