use nalgebra::{DMatrix, DVector};

use super::newton::{maximize, Evaluation, FitOptions};
use super::{check_finite, with_intercept, LinearModel};
use crate::error::{Error, Result};

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn evaluate(z: &DMatrix<f64>, y: &[bool], ridge: f64, theta: &DVector<f64>, derivs: bool) -> Evaluation {
    let index = z * theta;
    let mut value = -ridge * theta.norm_squared();
    let mut resid = DVector::zeros(z.nrows());
    let mut curv = DVector::zeros(z.nrows());
    for (i, (&t, &label)) in index.iter().zip(y).enumerate() {
        value += if label { -softplus(-t) } else { -softplus(t) };
        if derivs {
            let p = sigmoid(t);
            resid[i] = f64::from(u8::from(label)) - p;
            curv[i] = p * (1.0 - p);
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
    for j in 0..z.ncols() {
        neg_hessian[(j, j)] += 2.0 * ridge;
    }
    Evaluation {
        value,
        gradient,
        neg_hessian,
    }
}

/// Penalized logistic log-likelihood; `z` includes the intercept column.
pub fn logistic_objective(z: &DMatrix<f64>, y: &[bool], ridge: f64, theta: &DVector<f64>) -> f64 {
    evaluate(z, y, ridge, theta, false).value
}

pub fn logistic_gradient(z: &DMatrix<f64>, y: &[bool], ridge: f64, theta: &DVector<f64>) -> DVector<f64> {
    evaluate(z, y, ridge, theta, true).gradient
}

/// Ridge-penalized logistic regression by Newton/IRLS with step halving.
pub fn logistic_fit(x: &DMatrix<f64>, y: &[bool], opts: &FitOptions) -> Result<LinearModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    check_finite(x, "logistic design")?;
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    let z = with_intercept(x);
    let (theta, diagnostics) = maximize(z.ncols(), opts, |th, d| evaluate(&z, y, opts.ridge, th, d));
    Ok(LinearModel {
        weights: theta.iter().skip(1).copied().collect(),
        intercept: Some(theta[0]),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_give_log_odds() {
        let y: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        let m = logistic_fit(&DMatrix::zeros(50, 0), &y, &FitOptions::default()).unwrap();
        assert!(m.diagnostics.converged);
        assert!((m.intercept.unwrap() - (0.2f64 / 0.8).ln()).abs() < 1e-4);
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let m = logistic_fit(&x, &y, &FitOptions::default()).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        assert!(m.intercept.unwrap().is_finite());
    }

    #[test]
    fn single_class_is_rejected() {
        let x = DMatrix::zeros(3, 1);
        assert!(matches!(
            logistic_fit(&x, &[false; 3], &FitOptions::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
