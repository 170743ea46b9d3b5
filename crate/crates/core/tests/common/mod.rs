//! Independent oracles shared by the estimator tests and the acceptance suite.
//! Each check returns a description of the first discrepancy it finds.
#![allow(dead_code)]

use heckrank::estimators::{
    inverse_mills, logistic_gradient, logistic_objective, ols_fit, probit_fit, probit_gradient, probit_objective,
    std_normal_cdf, with_intercept, FitOptions,
};
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<(), String>;

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

fn probit_labels(rng: &mut ChaCha8Rng, x: &DMatrix<f64>, b: f64, w: &[f64]) -> Vec<bool> {
    (0..x.nrows())
        .map(|i| {
            let idx = b + (0..w.len()).map(|j| w[j] * x[(i, j)]).sum::<f64>();
            let e: f64 = StandardNormal.sample(rng);
            idx + e > 0.0
        })
        .collect()
}

/// Log-likelihood written out directly with `erfc`, independent of the crate.
fn oracle_probit_loglik(x: &[f64], o: &[bool], b: f64, w: f64) -> f64 {
    x.iter()
        .zip(o)
        .map(|(&xi, &oi)| {
            let t = b + w * xi;
            let s = if oi { t } else { -t };
            (0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)).ln()
        })
        .sum()
}

/// Probit MLE against the maximum of a 0.01-step grid over `[-5, 5]²`.
pub fn probit_grid_search() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 50;
    let x = normal_matrix(&mut rng, n, 1);
    let o = probit_labels(&mut rng, &x, 0.3, &[-0.8]);
    let xs: Vec<f64> = x.column(0).iter().copied().collect();

    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=1000 {
        let b = -5.0 + 0.01 * i as f64;
        for j in 0..=1000 {
            let w = -5.0 + 0.01 * j as f64;
            let ll = oracle_probit_loglik(&xs, &o, b, w);
            if ll > best.0 {
                best = (ll, b, w);
            }
        }
    }

    let fit = probit_fit(&x, &o, &FitOptions::default()).map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err("probit fit did not converge".into());
    }
    if (fit.intercept - best.1).abs() > 0.02 || (fit.weights[0] - best.2).abs() > 0.02 {
        return Err(format!(
            "probit ({}, {}) vs grid ({}, {})",
            fit.intercept, fit.weights[0], best.1, best.2
        ));
    }
    if fit.log_likelihood < best.0 - 1e-9 {
        return Err(format!(
            "fit log-likelihood {} below grid maximum {}",
            fit.log_likelihood, best.0
        ));
    }
    Ok(())
}

fn central_difference(f: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(theta.len(), |j, _| {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += h;
        minus[j] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

fn gradient_close(what: &str, analytic: &DVector<f64>, numeric: &DVector<f64>) -> Check {
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
        if rel >= 1e-4 {
            return Err(format!("{what}: analytic {a} vs numeric {n} (rel {rel})"));
        }
    }
    Ok(())
}

/// Analytic gradients against central differences (h = 1e-5) at 5 random points.
pub fn gradients_vs_finite_differences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = normal_matrix(&mut rng, 80, 3);
    let o = probit_labels(&mut rng, &x, 0.2, &[1.0, -0.5, 0.25]);
    let z = with_intercept(&x);
    for _ in 0..5 {
        let theta = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
        let ridge = 0.1;
        let analytic = probit_gradient(&z, &o, ridge, &theta);
        let numeric = central_difference(|t| probit_objective(&z, &o, ridge, t), &theta, 1e-5);
        gradient_close("probit", &analytic, &numeric)?;

        let analytic = logistic_gradient(&z, &o, ridge, &theta);
        let numeric = central_difference(|t| logistic_objective(&z, &o, ridge, t), &theta, 1e-5);
        gradient_close("logistic", &analytic, &numeric)?;
    }
    Ok(())
}

/// Solves `A x = b` exactly by Gauss–Jordan elimination.
fn solve_exact(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).expect("nonsingular");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col].clone();
        let pivot_row = a[col].clone();
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &p;
            for (v, pv) in a[r].iter_mut().zip(&pivot_row).skip(col) {
                *v -= &factor * pv;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    (0..n).map(|i| &b[i] / &a[i][i]).collect()
}

/// OLS against the normal equations solved in exact rational arithmetic.
pub fn ols_exact_normal_equations() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, d) = (200, 5);
    // Dyadic values keep the rational arithmetic small.
    let dyadic = |v: f64| (v * 1024.0).round() / 1024.0;
    let x = DMatrix::from_fn(n, d, |_, _| dyadic(rng.random_range(-2.0..2.0)));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = (0..d).map(|j| (j as f64 - 2.0) * x[(i, j)]).sum();
            dyadic(1.5 + signal + rng.random_range(-0.5..0.5))
        })
        .collect();

    let z = with_intercept(&x);
    let p = d + 1;
    let rational = |v: f64| BigRational::from_float(v).expect("finite");
    let mut ztz = vec![vec![BigRational::zero(); p]; p];
    let mut zty = vec![BigRational::zero(); p];
    for i in 0..n {
        let row: Vec<BigRational> = (0..p).map(|j| rational(z[(i, j)])).collect();
        let yi = rational(y[i]);
        for a in 0..p {
            zty[a] += &row[a] * &yi;
            for b in 0..p {
                ztz[a][b] += &row[a] * &row[b];
            }
        }
    }
    let exact = solve_exact(ztz, zty);

    let fit = ols_fit(&x, &y, 0.0).map_err(|e| e.to_string())?;
    let got = std::iter::once(fit.intercept.unwrap_or(f64::NAN)).chain(fit.weights.iter().copied());
    for (g, e) in got.zip(&exact) {
        let e = e.to_f64().unwrap();
        if (g - e).abs() >= 1e-6 {
            return Err(format!("ols coefficient {g} vs exact {e}"));
        }
    }
    Ok(())
}

fn mills_table() -> Vec<(f64, f64)> {
    include_str!("../data/inverse_mills.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

/// `λ(t)` against a 50-digit table at step 0.25 on `[-30, 30]`.
pub fn inverse_mills_table() -> Check {
    let table = mills_table();
    if table.len() != 241 {
        return Err(format!("table has {} entries", table.len()));
    }
    for (t, expected) in table {
        let got = inverse_mills(t);
        if (got - expected).abs() > 1e-9 {
            return Err(format!("λ({t}) = {got}, expected {expected}"));
        }
    }
    Ok(())
}

/// `λ` positive, finite and strictly decreasing on a 0.01 grid over `[-30, 30]`.
pub fn inverse_mills_shape() -> Check {
    let mut prev = f64::INFINITY;
    for i in 0..=6000 {
        let t = -30.0 + 0.01 * i as f64;
        let v = inverse_mills(t);
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("λ({t}) = {v}"));
        }
        if v >= prev {
            return Err(format!("λ not decreasing at {t}"));
        }
        prev = v;
    }
    Ok(())
}

/// `Φ(-8)` against the truncated asymptotic tail series.
pub fn normal_tail_series() -> Check {
    // Φ(-x) = φ(x)/x · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - ...)
    let x: f64 = 8.0;
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let x2 = x * x;
    let series = phi / x * (1.0 - 1.0 / x2 + 3.0 / x2.powi(2) - 15.0 / x2.powi(3) + 105.0 / x2.powi(4));
    // The first omitted term bounds the truncation error.
    let bound = phi / x * 945.0 / x2.powi(5);
    let got = std_normal_cdf(-8.0);
    if (got - series).abs() > bound {
        return Err(format!("Φ(-8) = {got}, series {series}"));
    }
    Ok(())
}
