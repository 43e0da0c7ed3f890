//! Loan-file ingestion, train/test splitting, and the synthetic loan-book
//! generator that stands in for a production data warehouse and provides
//! ground truth for oracle tests.

mod csv;
mod synth;

pub use csv::{load_loans, write_loans};
pub use synth::{
    generate_synthetic, load_ground_truth, write_ground_truth, DatasetConfig, GroundTruth,
    GroundTruthFile, LoanTruth, LogNormalBody, LogisticParams, TrueMarginal, GROUND_TRUTH_FORMAT,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::Portfolio;
use crate::error::{invalid_input, Result};
use crate::rng;

/// How to divide the loan book for training and testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of each category routed to training, in (0, 1].
    pub train_fraction: f64,
    /// Dates excluded from training entirely (out-of-time test set).
    pub holdout_dates: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<Portfolio>,
    /// Same dates as training, disjoint loans.
    pub test_overlap: Vec<Portfolio>,
    /// All loans at the holdout dates.
    pub test_holdout: Vec<Portfolio>,
}

/// Splits per category uniformly at random within every non-holdout date.
///
/// The train count per category is `round(train_fraction * n)` (half away
/// from zero). The partition is exact: every loan lands in exactly one of
/// the three parts, in its original order.
pub fn split(data: &[Portfolio], spec: &SplitSpec, seed: u64) -> Result<SplitResult> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(invalid_input(format!(
            "train_fraction {} outside (0, 1]",
            spec.train_fraction
        )));
    }
    for &h in &spec.holdout_dates {
        if !data.iter().any(|p| p.date_index == h) {
            return Err(invalid_input(format!("holdout date {h} not present in data")));
        }
    }

    let mut result = SplitResult {
        train: Vec::new(),
        test_overlap: Vec::new(),
        test_holdout: Vec::new(),
    };

    for portfolio in data {
        if spec.holdout_dates.contains(&portfolio.date_index) {
            result.test_holdout.push(portfolio.clone());
            continue;
        }

        let mut by_category: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, loan) in portfolio.loans.iter().enumerate() {
            by_category.entry(loan.category).or_default().push(i);
        }

        let mut in_train = vec![false; portfolio.loans.len()];
        for (&category, indices) in &by_category {
            let mut shuffled = indices.clone();
            let mut cat_rng = rng::stream2(seed, portfolio.date_index, category as u32);
            shuffled.shuffle(&mut cat_rng);
            let n_train = ((spec.train_fraction * shuffled.len() as f64).round() as usize)
                .min(shuffled.len());
            for &i in &shuffled[..n_train] {
                in_train[i] = true;
            }
        }

        let mut train_loans = Vec::new();
        let mut test_loans = Vec::new();
        for (i, loan) in portfolio.loans.iter().enumerate() {
            if in_train[i] {
                train_loans.push(loan.clone());
            } else {
                test_loans.push(loan.clone());
            }
        }
        if !train_loans.is_empty() {
            result.train.push(Portfolio::new(portfolio.date_index, train_loans)?);
        }
        if !test_loans.is_empty() {
            result
                .test_overlap
                .push(Portfolio::new(portfolio.date_index, test_loans)?);
        }
    }
    Ok(result)
}
