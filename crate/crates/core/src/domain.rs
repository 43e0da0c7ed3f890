//! Core value types: loans, categories, portfolios, and the two
//! repayment-rate formulas everything else composes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};

/// Upper bound of the repayment rate. Rates may exceed 1 because of penalty
/// interest; model outputs are clipped to `[0, R_MAX]`.
pub const R_MAX: f64 = 1.5;

/// One loan observed at one inspection date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanRecord {
    pub id: String,
    /// Period index of the inspection date.
    pub date_index: u32,
    /// Overdue-stage category, 1-based.
    pub category: usize,
    pub features: Vec<f64>,
    /// Expected repayment amount over the horizon (principal + interest).
    pub expected_amount: f64,
    /// Realized repayment rate over the horizon; absent at prediction time.
    pub realized_rate: Option<f64>,
}

impl LoanRecord {
    pub fn new(
        id: impl Into<String>,
        date_index: u32,
        category: usize,
        features: Vec<f64>,
        expected_amount: f64,
        realized_rate: Option<f64>,
    ) -> Result<Self> {
        if !(expected_amount > 0.0) {
            return Err(invalid_input(format!(
                "expected_amount must be positive, got {expected_amount}"
            )));
        }
        if category < 1 {
            return Err(invalid_input("category indices are 1-based"));
        }
        if let Some(rate) = realized_rate {
            if !(0.0..=R_MAX).contains(&rate) {
                return Err(invalid_input(format!(
                    "realized_rate {rate} outside [0, {R_MAX}]"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            date_index,
            category,
            features,
            expected_amount,
            realized_rate,
        })
    }
}

/// The overdue-stage categories a portfolio is partitioned into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScheme {
    labels: Vec<String>,
}

impl CategoryScheme {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid_input("category scheme needs at least one label"));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(invalid_input(format!("duplicate category label {a:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// `M1`, `M2`, ... stage names for `j` categories.
    pub fn monthly_stages(j: usize) -> Result<Self> {
        Self::new((1..=j).map(|i| format!("M{i}")).collect())
    }

    pub fn num_categories(&self) -> usize {
        self.labels.len()
    }

    /// Label of the 1-based category `j`.
    pub fn label(&self, j: usize) -> Option<&str> {
        self.labels.get(j.wrapping_sub(1)).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// All loans inspected at one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub date_index: u32,
    pub loans: Vec<LoanRecord>,
}

impl Portfolio {
    pub fn new(date_index: u32, loans: Vec<LoanRecord>) -> Result<Self> {
        if loans.is_empty() {
            return Err(invalid_input("portfolio must contain at least one loan"));
        }
        if let Some(stray) = loans.iter().find(|l| l.date_index != date_index) {
            return Err(invalid_input(format!(
                "loan {} has date_index {} but portfolio is at {}",
                stray.id, stray.date_index, date_index
            )));
        }
        Ok(Self { date_index, loans })
    }
}

/// Repayment rate of a single loan: actual over expected amount.
pub fn loan_repayment_rate(actual: f64, expected: f64) -> Result<f64> {
    if !(expected > 0.0) {
        return Err(invalid_input(format!(
            "expected amount must be positive, got {expected}"
        )));
    }
    if !(actual >= 0.0) {
        return Err(invalid_input(format!(
            "actual amount must be nonnegative, got {actual}"
        )));
    }
    Ok(actual / expected)
}

/// Overall repayment rate of a pool: amount-weighted mean of the loan rates.
pub fn portfolio_repayment_rate(rates: &[f64], amounts: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(invalid_input("empty portfolio"));
    }
    if rates.len() != amounts.len() {
        return Err(invalid_input(format!(
            "{} rates but {} amounts",
            rates.len(),
            amounts.len()
        )));
    }
    let mut repaid = 0.0;
    let mut total = 0.0;
    for (&r, &p) in rates.iter().zip(amounts) {
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!(
                "amounts must be positive, got {p}"
            )));
        }
        repaid += r * p;
        total += p;
    }
    Ok(repaid / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loan_rate_basic_cases() {
        assert_eq!(loan_repayment_rate(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(loan_repayment_rate(100.0, 100.0).unwrap(), 1.0);
        // penalty interest can push the rate above 1
        assert!((loan_repayment_rate(120.0, 100.0).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn loan_rate_rejects_bad_amounts() {
        assert!(loan_repayment_rate(10.0, 0.0).is_err());
        assert!(loan_repayment_rate(10.0, -5.0).is_err());
        assert!(loan_repayment_rate(-1.0, 5.0).is_err());
    }

    #[test]
    fn portfolio_rate_examples() {
        assert_eq!(
            portfolio_repayment_rate(&[0.5, 0.5], &[10.0, 90.0]).unwrap(),
            0.5
        );
        assert_eq!(
            portfolio_repayment_rate(&[0.0, 1.0], &[50.0, 50.0]).unwrap(),
            0.5
        );
        // (0.2*100 + 0.8*300) / 400
        assert!((portfolio_repayment_rate(&[0.2, 0.8], &[100.0, 300.0]).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn portfolio_rate_rejects_mismatch_and_empty() {
        assert!(portfolio_repayment_rate(&[], &[]).is_err());
        assert!(portfolio_repayment_rate(&[0.5], &[1.0, 2.0]).is_err());
        assert!(portfolio_repayment_rate(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn loan_record_validates_invariants() {
        assert!(LoanRecord::new("a", 1, 1, vec![0.0], 100.0, Some(1.2)).is_ok());
        assert!(LoanRecord::new("a", 1, 1, vec![0.0], 0.0, None).is_err());
        assert!(LoanRecord::new("a", 1, 0, vec![0.0], 100.0, None).is_err());
        assert!(LoanRecord::new("a", 1, 1, vec![0.0], 100.0, Some(1.6)).is_err());
        assert!(LoanRecord::new("a", 1, 1, vec![0.0], 100.0, Some(-0.1)).is_err());
    }

    #[test]
    fn portfolio_rejects_mixed_dates() {
        let a = LoanRecord::new("a", 1, 1, vec![], 10.0, None).unwrap();
        let b = LoanRecord::new("b", 2, 1, vec![], 10.0, None).unwrap();
        assert!(Portfolio::new(1, vec![a.clone(), b]).is_err());
        assert!(Portfolio::new(1, vec![a]).is_ok());
        assert!(Portfolio::new(1, vec![]).is_err());
    }

    #[test]
    fn category_scheme_checks_labels() {
        assert!(CategoryScheme::new(vec!["M1".into(), "M1".into()]).is_err());
        assert!(CategoryScheme::new(vec![]).is_err());
        let s = CategoryScheme::monthly_stages(3).unwrap();
        assert_eq!(s.num_categories(), 3);
        assert_eq!(s.label(2), Some("M2"));
        assert_eq!(s.label(0), None);
    }

    proptest! {
        #[test]
        fn portfolio_rate_scale_invariant(
            rates in proptest::collection::vec(0.0f64..1.5, 1..20),
            amounts in proptest::collection::vec(1.0f64..1e6, 1..20),
            scale in 0.01f64..100.0,
        ) {
            let n = rates.len().min(amounts.len());
            let rates = &rates[..n];
            let amounts = &amounts[..n];
            let scaled: Vec<f64> = amounts.iter().map(|p| p * scale).collect();
            let a = portfolio_repayment_rate(rates, amounts).unwrap();
            let b = portfolio_repayment_rate(rates, &scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn portfolio_rate_bounded_by_extremes(
            rates in proptest::collection::vec(0.0f64..1.5, 1..20),
            amounts in proptest::collection::vec(1.0f64..1e6, 1..20),
        ) {
            let n = rates.len().min(amounts.len());
            let rates = &rates[..n];
            let amounts = &amounts[..n];
            let r = portfolio_repayment_rate(rates, amounts).unwrap();
            let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }

        #[test]
        fn single_loan_rate_is_identity(rate in 0.0f64..1.5, amount in 1.0f64..1e6) {
            let r = portfolio_repayment_rate(&[rate], &[amount]).unwrap();
            prop_assert!((r - rate).abs() < 1e-12);
        }
    }
}
