use nalgebra::{DMatrix, DVector};

use super::FitDiagnostics;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 1e-6,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// One evaluation of a concave penalized log-likelihood: value, gradient and
/// the negated Hessian (positive definite).
pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
}

/// Relative size of the Newton decrement at which further progress is below
/// floating-point resolution of the objective.
const DECREMENT_RTOL: f64 = 1e-12;

/// Newton–Raphson ascent with step halving. Accepted steps never decrease the
/// objective. Convergence means the gradient max-norm fell below `tol`, or
/// the Newton decrement `gᵀH⁻¹g / 2` became negligible relative to the
/// objective (ill-conditioned designs stall above any absolute gradient
/// tolerance).
pub(crate) fn maximize(
    dim: usize,
    opts: &FitOptions,
    mut eval: impl FnMut(&DVector<f64>, bool) -> Evaluation,
) -> (DVector<f64>, FitDiagnostics) {
    let mut theta = DVector::zeros(dim);
    let mut current = eval(&theta, true);
    let mut diag = FitDiagnostics {
        trace: vec![current.value],
        ..Default::default()
    };

    for iter in 0..=opts.max_iter {
        diag.iterations = iter;
        if current.gradient.amax() < opts.tol {
            diag.converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let step = match current.neg_hessian.clone().cholesky() {
            Some(ch) => {
                let step = ch.solve(&current.gradient);
                let decrement = 0.5 * current.gradient.dot(&step);
                if decrement <= DECREMENT_RTOL * current.value.abs().max(1.0) {
                    diag.converged = true;
                    break;
                }
                step
            }
            None => current.gradient.clone(),
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &step * scale;
            let value = eval(&candidate, false).value;
            if value.is_finite() && value >= current.value {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            // No ascent direction left at machine precision.
            break;
        };
        theta = next;
        current = eval(&theta, true);
        diag.trace.push(current.value);
    }
    diag.objective = current.value;
    (theta, diag)
}
