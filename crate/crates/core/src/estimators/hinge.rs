use rand::Rng;

use super::{FitDiagnostics, LinearModel};
use crate::dataset::{dot, DocIndex};
use crate::error::{Error, Result};
use crate::seeding::Seed;

/// Preference `winner ≻ loser` within one query, with a positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPair {
    pub query_id: String,
    pub winner: String,
    pub loser: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeOptions {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HingeOptions {
    fn default() -> Self {
        HingeOptions {
            c: 1.0,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Linear ranking SVM:
/// `min ½‖w‖² + C Σ_p weight_p · max(0, 1 - w·(f_winner - f_loser))`.
///
/// Solved with Pegasos: the objective is rescaled to
/// `λ/2 ‖w‖² + (1/m) Σ weight_p hinge_p` with `λ = 1/(C m)`, and each step
/// uses rate `1/(λ t)`. Pairs are drawn proportionally to their weight and the
/// subgradient is scaled by the mean weight, which is an unbiased estimate of
/// the same objective with lower variance. Iterates are projected onto the
/// ball that must contain the optimum. Runs `epochs · m` steps and returns
/// the average of the second half of the iterates, which is far less noisy
/// than the last iterate.
pub fn pairwise_hinge_fit(pairs: &[WeightedPair], features: &DocIndex<'_>, opts: &HingeOptions) -> Result<LinearModel> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", opts.c)));
    }
    let dim = features.feature_dim();
    let mut diffs = Vec::with_capacity(pairs.len());
    let mut cumulative = Vec::with_capacity(pairs.len());
    let mut total = 0.0;
    for p in pairs {
        if !(p.weight > 0.0 && p.weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pair weight must be positive, got {}",
                p.weight
            )));
        }
        if p.winner == p.loser {
            return Err(Error::InvalidArgument(format!(
                "self-pair {} in query {}",
                p.winner, p.query_id
            )));
        }
        let fw = features.features(&p.query_id, &p.winner)?;
        let fl = features.features(&p.query_id, &p.loser)?;
        diffs.push(fw.iter().zip(fl).map(|(a, b)| a - b).collect::<Vec<f64>>());
        total += p.weight;
        cumulative.push(total);
    }

    let m = pairs.len();
    let lambda = 1.0 / (opts.c * m as f64);
    let mean_weight = total / m as f64;
    let radius = (2.0 * mean_weight / lambda).sqrt();
    let steps = opts.epochs.max(1) * m;

    let mut rng = Seed::new(opts.seed).with_str("pegasos").rng();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let burn_in = steps / 2;
    for t in 1..=steps {
        let u = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(m - 1);
        let x = &diffs[idx];
        let margin = dot(&w, x);
        let shrink = 1.0 - 1.0 / t as f64;
        w.iter_mut().for_each(|wi| *wi *= shrink);
        if margin < 1.0 {
            let rate = mean_weight / (lambda * t as f64);
            w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += rate * xi);
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|wi| *wi *= s);
        }
        if t > burn_in {
            let k = (t - burn_in) as f64;
            avg.iter_mut().zip(&w).for_each(|(a, wi)| *a += (wi - *a) / k);
        }
    }
    let w = avg;

    let loss: f64 = pairs
        .iter()
        .zip(&diffs)
        .map(|(p, x)| p.weight * (1.0 - dot(&w, x)).max(0.0))
        .sum();
    let objective = 0.5 * dot(&w, &w) + opts.c * loss;
    Ok(LinearModel {
        weights: w,
        intercept: None,
        diagnostics: FitDiagnostics {
            iterations: steps,
            objective,
            converged: true,
            trace: Vec::new(),
        },
    })
}
