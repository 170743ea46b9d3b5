//! Selection-bias-corrected learning-to-rank.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: LETOR ingestion, synthetic data, binarization and query splits.
//! - [`estimators`]: normal distribution helpers, inverse Mills ratio, probit,
//!   least squares, logistic regression and a weighted pairwise hinge ranker.
//! - [`clicksim`]: base ranker bootstrapping and position/selection biased clicks.
//! - [`rankers`]: naive, propensity-weighted and two-stage selection-corrected rankers.
//! - [`ensembles`]: learned linear combination and Borda aggregation of two rankers.
//! - [`metrics`]: ARRR and nDCG@p.
//! - [`harness`]: config-driven sweeps with CSV and plot-series output.

pub mod clicksim;
pub mod dataset;
pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod model_text;
pub mod rankers;
mod seeding;

pub use error::{Error, Result};
