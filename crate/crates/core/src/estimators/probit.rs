use nalgebra::{DMatrix, DVector};

use super::newton::{maximize, Evaluation, FitOptions};
use super::normal::{inverse_mills, ln_std_normal_cdf, std_normal_cdf};
use super::{check_finite, with_intercept, FitDiagnostics};
use crate::dataset::dot;
use crate::error::{Error, Result};
use crate::model_text::KeyValues;

/// Probit selection model `P(o = 1 | z) = Φ(b + θ·z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub converged: bool,
    /// Unpenalized log-likelihood at the returned parameters.
    pub log_likelihood: f64,
    pub diagnostics: FitDiagnostics,
}

impl ProbitModel {
    pub fn index(&self, z: &[f64]) -> f64 {
        self.intercept + dot(&self.weights, z)
    }

    pub fn probability(&self, z: &[f64]) -> f64 {
        std_normal_cdf(self.index(z))
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kind", "probit");
        kv.set("converged", self.converged);
        kv.set("iterations", self.diagnostics.iterations);
        kv.set("log_likelihood", self.log_likelihood);
        kv.set("intercept", self.intercept);
        kv.set_weights(&self.weights);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let intercept: f64 = kv.get_parsed("intercept")?;
        let weights = kv.weights()?;
        if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelFormat("non-finite probit coefficient".into()));
        }
        Ok(ProbitModel {
            intercept,
            weights,
            converged: kv.get_parsed("converged")?,
            log_likelihood: kv.get_parsed("log_likelihood")?,
            diagnostics: FitDiagnostics {
                iterations: kv.get_parsed("iterations").unwrap_or(0),
                converged: kv.get_parsed("converged")?,
                ..Default::default()
            },
        })
    }
}

fn evaluate(z: &DMatrix<f64>, o: &[bool], ridge: f64, theta: &DVector<f64>, derivs: bool) -> Evaluation {
    let p = z.ncols();
    let index = z * theta;
    let mut value = -ridge * theta.norm_squared();
    let mut resid = DVector::zeros(z.nrows());
    let mut curv = DVector::zeros(z.nrows());
    for (i, (&t, &obs)) in index.iter().zip(o).enumerate() {
        // Sign-flip so both classes use ln Φ(s) with s = ±t.
        let s = if obs { t } else { -t };
        value += ln_std_normal_cdf(s);
        if derivs {
            let lam = inverse_mills(s);
            resid[i] = if obs { lam } else { -lam };
            curv[i] = (lam * (s + lam)).max(0.0);
        }
    }
    if !derivs {
        return Evaluation {
            value,
            gradient: DVector::zeros(0),
            neg_hessian: DMatrix::zeros(0, 0),
        };
    }
    let gradient = z.tr_mul(&resid) - theta * (2.0 * ridge);
    let mut weighted = z.clone();
    for (mut row, w) in weighted.row_iter_mut().zip(curv.iter()) {
        row *= w.sqrt();
    }
    let mut neg_hessian = weighted.tr_mul(&weighted);
    for j in 0..p {
        neg_hessian[(j, j)] += 2.0 * ridge;
    }
    Evaluation {
        value,
        gradient,
        neg_hessian,
    }
}

/// Penalized log-likelihood `Σ[o ln Φ(θ·z) + (1-o) ln(1-Φ(θ·z))] - ridge‖θ‖²`.
///
/// `z` must already contain the intercept column (see [`with_intercept`]).
pub fn probit_objective(z: &DMatrix<f64>, o: &[bool], ridge: f64, theta: &DVector<f64>) -> f64 {
    evaluate(z, o, ridge, theta, false).value
}

/// Analytic gradient of [`probit_objective`].
pub fn probit_gradient(z: &DMatrix<f64>, o: &[bool], ridge: f64, theta: &DVector<f64>) -> DVector<f64> {
    evaluate(z, o, ridge, theta, true).gradient
}

/// Ridge-penalized probit maximum likelihood by Newton–Raphson with step halving.
///
/// An intercept column is appended internally. Non-convergence is reported
/// through `converged = false`, not as an error.
pub fn probit_fit(x: &DMatrix<f64>, o: &[bool], opts: &FitOptions) -> Result<ProbitModel> {
    if x.nrows() != o.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: o.len(),
        });
    }
    if x.nrows() < x.ncols() + 1 {
        return Err(Error::InvalidArgument(format!(
            "probit needs n >= d + 1 rows, got n={} d={}",
            x.nrows(),
            x.ncols()
        )));
    }
    check_finite(x, "probit design")?;
    let positives = o.iter().filter(|&&v| v).count();
    if positives == 0 || positives == o.len() {
        return Err(Error::DegenerateSelectionLabels);
    }
    let z = with_intercept(x);
    let (theta, diagnostics) = maximize(z.ncols(), opts, |th, d| evaluate(&z, o, opts.ridge, th, d));
    let log_likelihood = (diagnostics.objective + opts.ridge * theta.norm_squared()).min(0.0);
    Ok(ProbitModel {
        intercept: theta[0],
        weights: theta.iter().skip(1).copied().collect(),
        converged: diagnostics.converged,
        log_likelihood,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ⁻¹ by bisection, test-only.
    fn probit_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn no_information_recovers_base_rate() {
        let n = 40;
        let x = DMatrix::zeros(n, 2);
        let o: Vec<bool> = (0..n).map(|i| i % 4 != 0).collect();
        let m = probit_fit(&x, &o, &FitOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.intercept - probit_quantile(0.75)).abs() < 1e-4);
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!(m.log_likelihood <= 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = DMatrix::from_element(5, 1, 0.3);
        assert!(matches!(
            probit_fit(&x, &[true; 5], &FitOptions::default()),
            Err(Error::DegenerateSelectionLabels)
        ));
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let x = DMatrix::from_element(2, 2, 0.3);
        assert!(probit_fit(&x, &[true, false], &FitOptions::default()).is_err());
    }

    #[test]
    fn separable_labels_stay_finite() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 / 19.0);
        let o: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let m = probit_fit(&x, &o, &FitOptions::default()).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        assert!(m.intercept.is_finite());
    }

    #[test]
    fn trace_is_non_decreasing() {
        let x = DMatrix::from_fn(60, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let o: Vec<bool> = (0..60).map(|i| (i * 5) % 7 < 4).collect();
        let m = probit_fit(&x, &o, &FitOptions::default()).unwrap();
        assert!(m.diagnostics.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
