//! Bottom-up repayment-risk engine for portfolios of non-performing
//! consumer loans.
//!
//! The pipeline predicts the full distribution of a portfolio's overall
//! repayment rate from the bottom up:
//!
//! 1. [`marginal`] learns each loan's conditional repayment-rate law with
//!    multi-level quantile regression (rearranged, with an atom at zero).
//! 2. [`copula`] couples the loans: a randomized probability integral
//!    transform handles the mixed discrete-continuous rates, and a
//!    one-factor Gaussian structure captures the common risk factor.
//! 3. [`estimation`] fits the factor realization and category loadings by
//!    matching conditional moments, averaged over repeated randomizations.
//! 4. [`simulation`] Monte Carlos the portfolio rate distribution.
//! 5. [`evaluation`] scores calibration (randomized PIT + Shapiro-Wilk),
//!    MAPE, and the moving-average top-down baseline.
//!
//! [`data`] supplies CSV ingestion, train/test splitting and a synthetic
//! loan-book generator with recoverable ground truth; [`domain`] holds the
//! shared value types.

pub mod copula;
pub mod data;
pub mod domain;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod marginal;
pub mod rng;
pub mod simulation;

mod normal;

pub use error::{Error, Result};
