//! Numerical estimation kit used by the rankers.
//!
//! All likelihood fits append an intercept column internally, carry a small
//! ridge penalty, and report the intercept separately from feature weights.

mod hinge;
mod logistic;
mod newton;
mod normal;
mod ols;
mod probit;

pub use hinge::{pairwise_hinge_fit, HingeOptions, WeightedPair};
pub use logistic::{logistic_fit, logistic_gradient, logistic_objective};
pub use newton::FitOptions;
pub use normal::{inverse_mills, ln_std_normal_cdf, std_normal_cdf, std_normal_pdf};
pub use ols::ols_fit;
pub use probit::{probit_fit, probit_gradient, probit_objective, ProbitModel};

use nalgebra::DMatrix;

use crate::dataset::dot;
use crate::error::{Error, Result};
use crate::model_text::KeyValues;

/// Convergence bookkeeping shared by all fitters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Final objective in the fitter's own convention (maximized penalized
    /// log-likelihood for Newton fits, minimized loss otherwise).
    pub objective: f64,
    pub converged: bool,
    /// Objective after each accepted step.
    pub trace: Vec<f64>,
}

/// Linear scoring model `w·f (+ b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: Option<f64>) -> Self {
        LinearModel {
            weights,
            intercept,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features) + self.intercept.unwrap_or(0.0)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kind", "linear");
        kv.set("converged", self.diagnostics.converged);
        kv.set("iterations", self.diagnostics.iterations);
        kv.set(
            "intercept",
            self.intercept.map_or("none".to_string(), |b| b.to_string()),
        );
        kv.set_weights(&self.weights);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let intercept = match kv.require("intercept")? {
            "none" => None,
            _ => Some(kv.get_parsed("intercept")?),
        };
        let weights = kv.weights()?;
        if weights.iter().any(|w| !w.is_finite()) || intercept.is_some_and(|b: f64| !b.is_finite()) {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
        Ok(LinearModel {
            weights,
            intercept,
            diagnostics: FitDiagnostics {
                iterations: kv.get_parsed("iterations").unwrap_or(0),
                converged: kv.get_parsed("converged").unwrap_or(false),
                ..Default::default()
            },
        })
    }
}

/// `[1 | X]`: the design matrix with a leading intercept column.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Row-major feature rows into a dense matrix.
pub fn design_matrix(rows: &[&[f64]], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

pub(crate) fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
