use nalgebra::{DMatrix, DVector};

use super::{check_finite, with_intercept, FitDiagnostics, LinearModel};
use crate::error::{Error, Result};

/// Ridge-regularized least squares, `(ZᵀZ + ridge·I)β = Zᵀy` with `Z = [1 | X]`.
///
/// Solved by Cholesky; if the system is not numerically positive definite
/// (only possible with `ridge = 0`) the SVD pseudo-inverse is used instead.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("ols needs at least one row".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    check_finite(x, "ols design")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ols response".into()));
    }

    let z = with_intercept(x);
    let y = DVector::from_column_slice(y);
    let mut gram = z.tr_mul(&z);
    for j in 0..gram.ncols() {
        gram[(j, j)] += ridge;
    }
    let rhs = z.tr_mul(&y);
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Singular(e.to_string()))?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Singular("ols produced non-finite coefficients".into()));
    }
    let resid = &y - &z * &beta;
    Ok(LinearModel {
        weights: beta.iter().skip(1).copied().collect(),
        intercept: Some(beta[0]),
        diagnostics: FitDiagnostics {
            iterations: 1,
            objective: resid.norm_squared() + ridge * beta.norm_squared(),
            converged: true,
            trace: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_data_has_zero_residuals() {
        let x = DMatrix::from_fn(12, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 / 3.0);
        let y: Vec<f64> = (0..12).map(|i| 0.5 + 2.0 * x[(i, 0)] - 1.5 * x[(i, 1)]).collect();
        let m = ols_fit(&x, &y, 1e-8).unwrap();
        let max_r = (0..12)
            .map(|i| (y[i] - m.score(&[x[(i, 0)], x[(i, 1)]])).abs())
            .fold(0.0, f64::max);
        assert!(max_r < 1e-8, "max residual {max_r}");
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let x = DMatrix::zeros(3, 0);
        let m = ols_fit(&x, &[1.0, 2.0, 3.0], 1e-8).unwrap();
        assert!((m.intercept.unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn collinear_design_falls_back_without_ridge() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let m = ols_fit(&x, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!((m.score(&[1.0]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        let x = DMatrix::from_element(2, 1, f64::NAN);
        assert!(matches!(ols_fit(&x, &[1.0, 2.0], 1e-8), Err(Error::NonFinite(_))));
        let x = DMatrix::from_element(2, 1, 1.0);
        assert!(matches!(
            ols_fit(&x, &[1.0, f64::INFINITY], 1e-8),
            Err(Error::NonFinite(_))
        ));
    }
}
