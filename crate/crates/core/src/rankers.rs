//! Click-trained rankers: naive pairwise, inverse-propensity-weighted
//! pairwise, and the two-stage selection-corrected model.
//!
//! The pairwise rankers only see observed documents. The two-stage model
//! also reads unobserved rows: a probit fitted on every record estimates
//! the probability of being shown, and its inverse Mills ratio enters the
//! click regression on observed rows as an extra regressor.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::clicksim::{ClickLog, ClickRecord, RankedList, Rankings};
use crate::dataset::{dot, Dataset, DocIndex};
use crate::error::{Error, Result};
use crate::estimators::{
    design_matrix, inverse_mills, ols_fit, pairwise_hinge_fit, probit_fit, FitOptions, HingeOptions, LinearModel,
    ProbitModel, WeightedPair,
};
use crate::model_text::KeyValues;

pub const OLS_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RankerKind {
    Naive,
    Propensity,
    Heckman,
}

impl RankerKind {
    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Naive => "naive",
            RankerKind::Propensity => "propensity",
            RankerKind::Heckman => "heckman",
        }
    }
}

/// Second-stage model of the selection-corrected ranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stage2 {
    /// Linear probability model fitted by least squares.
    #[default]
    Linear,
    /// Probit on the same regressors.
    Probit,
}

impl std::str::FromStr for Stage2 {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Stage2::Linear),
            "probit" => Ok(Stage2::Probit),
            other => Err(Error::InvalidArgument(format!("unknown stage-2 model {other:?}"))),
        }
    }
}

impl Stage2 {
    fn name(self) -> &'static str {
        match self {
            Stage2::Linear => "linear",
            Stage2::Probit => "probit",
        }
    }
}

/// Two-stage selection-corrected click model.
#[derive(Debug, Clone, PartialEq)]
pub struct HeckmanModel {
    /// Selection equation over all records.
    pub stage1: ProbitModel,
    pub stage2: Stage2,
    pub alpha: Vec<f64>,
    pub alpha_intercept: f64,
    /// Coefficient on the inverse Mills ratio.
    pub sigma: f64,
}

impl HeckmanModel {
    pub fn mills(&self, features: &[f64]) -> f64 {
        inverse_mills(self.stage1.index(features))
    }

    /// Predicted click index `α·f + σ·λ(θ·z)`. For the probit stage-2 variant
    /// this is the probit index, which orders documents identically to the
    /// predicted probability.
    pub fn score(&self, features: &[f64]) -> f64 {
        self.alpha_intercept + dot(&self.alpha, features) + self.sigma * self.mills(features)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kind", "heckman");
        kv.set("stage2", self.stage2.name());
        kv.set("sigma", self.sigma);
        kv.extend_prefixed("stage1", &self.stage1.to_kv());
        let mut s2 = KeyValues::new();
        s2.set("intercept", self.alpha_intercept);
        s2.set_weights(&self.alpha);
        kv.extend_prefixed("outcome", &s2);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let stage1 = ProbitModel::from_kv(&kv.section("stage1"))?;
        let s2 = kv.section("outcome");
        let alpha = s2.weights()?;
        if alpha.len() != stage1.weights.len() {
            return Err(Error::ModelFormat("stage dimensions differ".into()));
        }
        Ok(HeckmanModel {
            stage1,
            stage2: kv.require("stage2")?.parse()?,
            alpha,
            alpha_intercept: s2.get_parsed("intercept")?,
            sigma: kv.get_parsed("sigma")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Linear(LinearModel),
    Heckman(HeckmanModel),
}

/// Instrumentation from training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    /// Click-log records consumed by the estimator.
    pub records_used: usize,
    pub pairs: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingModel {
    pub kind: RankerKind,
    pub scorer: Scorer,
    pub stats: TrainStats,
}

impl RankingModel {
    pub fn dim(&self) -> usize {
        match &self.scorer {
            Scorer::Linear(m) => m.dim(),
            Scorer::Heckman(h) => h.dim(),
        }
    }

    pub fn score_features(&self, features: &[f64]) -> f64 {
        match &self.scorer {
            Scorer::Linear(m) => m.score(features),
            Scorer::Heckman(h) => h.score(features),
        }
    }

    pub fn heckman(&self) -> Option<&HeckmanModel> {
        match &self.scorer {
            Scorer::Heckman(h) => Some(h),
            Scorer::Linear(_) => None,
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = match &self.scorer {
            Scorer::Linear(m) => m.to_kv(),
            Scorer::Heckman(h) => h.to_kv(),
        };
        kv.set("kind", self.kind.name());
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind = match kv.require("kind")? {
            "naive" => RankerKind::Naive,
            "propensity" => RankerKind::Propensity,
            "heckman" => RankerKind::Heckman,
            other => return Err(Error::ModelFormat(format!("unknown ranker kind {other:?}"))),
        };
        let scorer = match kind {
            RankerKind::Heckman => Scorer::Heckman(HeckmanModel::from_kv(kv)?),
            _ => Scorer::Linear(LinearModel::from_kv(kv)?),
        };
        Ok(RankingModel {
            kind,
            scorer,
            stats: TrainStats::default(),
        })
    }
}

/// Inverse propensity weight `1/Q = rank^η` with `Q = (1/rank)^η`.
pub fn ipw_weight(shown_rank: usize, eta: f64) -> Result<f64> {
    if shown_rank < 1 {
        return Err(Error::InvalidArgument("shown_rank must be >= 1".into()));
    }
    Ok((shown_rank as f64).powf(eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairWeighting {
    Uniform,
    /// Weight clicked documents by `rank^η` for the assumed bias `η`.
    Ipw(f64),
}

fn group_by_query(log: &ClickLog) -> BTreeMap<&str, Vec<&ClickRecord>> {
    let mut groups: BTreeMap<&str, Vec<&ClickRecord>> = BTreeMap::new();
    for r in &log.records {
        groups.entry(r.query_id.as_str()).or_default().push(r);
    }
    groups
}

/// Clicked-over-unclicked preferences among observed documents.
///
/// Every clicked document beats every observed, unclicked document of the same
/// query. The weight is the click count, times `rank^η` under IPW weighting.
/// Unobserved documents never appear.
pub fn build_pairs(log: &ClickLog, ds: &Dataset, weighting: PairWeighting) -> Result<Vec<WeightedPair>> {
    log.check_aligned(ds)?;
    if log.records.iter().all(|r| r.clicks == 0) {
        return Err(Error::EmptyClickLog);
    }
    let mut pairs = Vec::new();
    for (qid, records) in group_by_query(log) {
        let losers: Vec<&ClickRecord> = records
            .iter()
            .copied()
            .filter(|r| r.observed && r.clicks == 0)
            .collect();
        for winner in records.iter().filter(|r| r.clicks > 0) {
            let propensity = match weighting {
                PairWeighting::Uniform => 1.0,
                PairWeighting::Ipw(eta) => ipw_weight(winner.shown_rank, eta)?,
            };
            let weight = f64::from(winner.clicks) * propensity;
            for loser in &losers {
                pairs.push(WeightedPair {
                    query_id: qid.to_string(),
                    winner: winner.doc_id.clone(),
                    loser: loser.doc_id.clone(),
                    weight,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "click log yields no clicked/unclicked pairs".into(),
        ));
    }
    Ok(pairs)
}

fn pairwise_train(
    kind: RankerKind,
    log: &ClickLog,
    ds: &Dataset,
    weighting: PairWeighting,
    hinge: &HingeOptions,
) -> Result<RankingModel> {
    let pairs = build_pairs(log, ds, weighting)?;
    let model = pairwise_hinge_fit(&pairs, &ds.index(), hinge)?;
    Ok(RankingModel {
        kind,
        scorer: Scorer::Linear(model),
        stats: TrainStats {
            records_used: log.records.iter().filter(|r| r.observed).count(),
            pairs: pairs.len(),
            warnings: Vec::new(),
        },
    })
}

/// Ranking SVM on raw clicks: every click counts as a relevance judgment.
pub fn naive_train(log: &ClickLog, ds: &Dataset, hinge: &HingeOptions) -> Result<RankingModel> {
    pairwise_train(RankerKind::Naive, log, ds, PairWeighting::Uniform, hinge)
}

/// Ranking SVM with clicked documents reweighted by `rank^η`, where `η` is the
/// assumed position-bias severity (not necessarily the simulator's).
pub fn propensity_train(log: &ClickLog, ds: &Dataset, eta: f64, hinge: &HingeOptions) -> Result<RankingModel> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    pairwise_train(RankerKind::Propensity, log, ds, PairWeighting::Ipw(eta), hinge)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeckmanOptions {
    pub probit: FitOptions,
    pub stage2: Stage2,
}

fn features_of<'a>(index: &DocIndex<'a>, r: &ClickRecord) -> Result<&'a [f64]> {
    index.features(&r.query_id, &r.doc_id)
}

/// Two-stage selection correction.
///
/// Stage 1 fits `P(observed | f) = Φ(θ·f)` on every record, shown or not.
/// Stage 2 regresses the clicked-at-least-once indicator of observed records on
/// `[f, λ(θ̂·f)]`, giving feature weights `α` and the Mills coefficient `σ`.
pub fn heckman_train(log: &ClickLog, ds: &Dataset, opts: &HeckmanOptions) -> Result<RankingModel> {
    log.check_aligned(ds)?;
    let n_obs = log.records.iter().filter(|r| r.observed).count();
    if n_obs == 0 || n_obs == log.records.len() {
        return Err(Error::NoSelectionVariation);
    }
    if log.records.iter().all(|r| r.clicks == 0) {
        return Err(Error::EmptyClickLog);
    }
    let index = ds.index();
    let d = ds.feature_dim;

    let all_rows: Vec<&[f64]> = log
        .records
        .iter()
        .map(|r| features_of(&index, r))
        .collect::<Result<_>>()?;
    let observed: Vec<bool> = log.records.iter().map(|r| r.observed).collect();
    let stage1 = probit_fit(&design_matrix(&all_rows, d), &observed, &opts.probit)?;

    let mut warnings = Vec::new();
    if !stage1.converged {
        warnings.push(format!(
            "selection probit did not converge after {} iterations",
            stage1.diagnostics.iterations
        ));
    }

    let obs_rows: Vec<(&[f64], bool)> = log
        .records
        .iter()
        .zip(&all_rows)
        .filter(|(r, _)| r.observed)
        .map(|(r, f)| (*f, r.clicks > 0))
        .collect();
    let x2 = DMatrix::from_fn(obs_rows.len(), d + 1, |i, j| {
        let f = obs_rows[i].0;
        if j < d {
            f[j]
        } else {
            inverse_mills(stage1.index(f))
        }
    });
    let (coef, intercept) = match opts.stage2 {
        Stage2::Linear => {
            let y: Vec<f64> = obs_rows.iter().map(|(_, c)| f64::from(u8::from(*c))).collect();
            let m = ols_fit(&x2, &y, OLS_RIDGE)?;
            let b = m.intercept.unwrap_or(0.0);
            (m.weights, b)
        }
        Stage2::Probit => {
            let y: Vec<bool> = obs_rows.iter().map(|(_, c)| *c).collect();
            let m = probit_fit(&x2, &y, &opts.probit).map_err(|e| match e {
                Error::DegenerateSelectionLabels => Error::DegenerateLabels,
                other => other,
            })?;
            if !m.converged {
                warnings.push("stage-2 probit did not converge".into());
            }
            (m.weights, m.intercept)
        }
    };

    let model = HeckmanModel {
        stage1,
        stage2: opts.stage2,
        alpha: coef[..d].to_vec(),
        alpha_intercept: intercept,
        sigma: coef[d],
    };
    Ok(RankingModel {
        kind: RankerKind::Heckman,
        scorer: Scorer::Heckman(model),
        stats: TrainStats {
            records_used: log.records.len(),
            pairs: 0,
            warnings,
        },
    })
}

/// Ranks all documents of one query by descending model score (ties by doc id).
pub fn score(model: &RankingModel, ds: &Dataset, query_id: &str) -> Result<RankedList> {
    if model.dim() != ds.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: ds.feature_dim,
        });
    }
    let q = ds
        .query(query_id)
        .ok_or_else(|| Error::UnknownQuery(query_id.to_string()))?;
    Ok(RankedList::from_scores(
        query_id,
        q.documents
            .iter()
            .map(|d| (d.doc_id.as_str(), model.score_features(&d.features))),
    ))
}

/// [`score`] for every query of `ds`.
pub fn score_all(model: &RankingModel, ds: &Dataset) -> Result<Rankings> {
    ds.queries
        .iter()
        .map(|q| Ok((q.query_id.clone(), score(model, ds, &q.query_id)?)))
        .collect()
}
