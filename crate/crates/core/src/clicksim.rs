//! Semi-synthetic click logs.
//!
//! A weak base ranker is fitted on a small slice of queries with true labels,
//! the remaining queries are ranked with it, and clicks are sampled from the
//! examination model `P(click) = rel / rank^η` for documents shown above the
//! cutoff `k`, repeated over several sampling passes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Query};
use crate::error::{Error, Result};
use crate::estimators::{pairwise_hinge_fit, HingeOptions, LinearModel, WeightedPair};
use crate::seeding::Seed;

pub const DEFAULT_PASSES: usize = 15;
pub const DEFAULT_BASE_FRACTION: f64 = 0.01;

/// A query's documents in presentation order, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub query_id: String,
    pub doc_ids: Vec<String>,
}

impl RankedList {
    /// Sorts by descending score, breaking ties by ascending doc id.
    pub fn from_scores<'a>(query_id: &str, scored: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut v: Vec<(&str, f64)> = scored.into_iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        RankedList {
            query_id: query_id.to_string(),
            doc_ids: v.into_iter().map(|(d, _)| d.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// 1-based rank of `doc_id`.
    pub fn rank(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id).map(|p| p + 1)
    }

    /// All 1-based ranks keyed by doc id.
    pub fn ranks(&self) -> HashMap<&str, usize> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i + 1))
            .collect()
    }

    /// True iff this list is a permutation of the query's documents.
    pub fn is_permutation_of(&self, query: &Query) -> bool {
        if self.doc_ids.len() != query.documents.len() {
            return false;
        }
        let mine: HashSet<&str> = self.doc_ids.iter().map(String::as_str).collect();
        mine.len() == self.doc_ids.len() && query.documents.iter().all(|d| mine.contains(d.doc_id.as_str()))
    }
}

pub type Rankings = BTreeMap<String, RankedList>;

#[derive(Debug, Clone, PartialEq)]
pub struct ClickRecord {
    pub query_id: String,
    pub doc_id: String,
    pub shown_rank: usize,
    pub observed: bool,
    pub clicks: u32,
    /// Ground truth carried for evaluation; trainers never read it.
    pub relevance: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickParams {
    pub eta: f64,
    pub k: usize,
    pub noise: f64,
    pub passes: usize,
    pub seed: u64,
}

impl ClickParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("cutoff k must be >= 1".into()));
        }
        if self.passes < 1 {
            return Err(Error::InvalidArgument("passes must be >= 1".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!(
                "noise must lie in [0,1), got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub records: Vec<ClickRecord>,
    pub params: ClickParams,
}

impl ClickLog {
    pub fn total_clicks(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.clicks)).sum()
    }

    /// Checks the record-level invariants against the log's cutoff.
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if r.shown_rank < 1 {
                return Err(Error::InvalidArgument(format!(
                    "shown_rank 0 for {}/{}",
                    r.query_id, r.doc_id
                )));
            }
            if r.observed != (r.shown_rank <= self.params.k) {
                return Err(Error::InvalidArgument(format!(
                    "observed flag inconsistent with k={} for {}/{}",
                    self.params.k, r.query_id, r.doc_id
                )));
            }
            if r.clicks > 0 && !r.observed {
                return Err(Error::InvalidArgument(format!(
                    "click on unobserved {}/{}",
                    r.query_id, r.doc_id
                )));
            }
        }
        Ok(())
    }

    /// Checks that the log holds exactly one record per document of `ds`.
    pub fn check_aligned(&self, ds: &Dataset) -> Result<()> {
        if self.records.len() != ds.num_documents() {
            return Err(Error::InvalidArgument(format!(
                "click log has {} records, dataset has {} documents",
                self.records.len(),
                ds.num_documents()
            )));
        }
        let index = ds.index();
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            index.get(&r.query_id, &r.doc_id)?;
            if !seen.insert((r.query_id.as_str(), r.doc_id.as_str())) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate record {}/{}",
                    r.query_id, r.doc_id
                )));
            }
        }
        Ok(())
    }

    /// CSV with a `#` parameter line followed by the fixed header.
    pub fn to_csv(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# eta={} k={} noise={} passes={} seed={}",
            p.eta, p.k, p.noise, p.passes, p.seed
        );
        out.push_str(CLICK_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.query_id,
                r.doc_id,
                r.shown_rank,
                u8::from(r.observed),
                r.clicks,
                r.relevance
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut params = None;
        let mut header_seen = false;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                params = Some(parse_param_comment(comment).map_err(err)?);
                continue;
            }
            if !header_seen {
                if line != CLICK_HEADER {
                    return Err(err(format!("expected header {CLICK_HEADER:?}")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, got {}", f.len())));
            }
            let num = |s: &str, what: &str| -> std::result::Result<u64, Error> {
                s.parse().map_err(|_| err(format!("invalid {what} {s:?}")))
            };
            records.push(ClickRecord {
                query_id: f[0].to_string(),
                doc_id: f[1].to_string(),
                shown_rank: num(f[2], "shown_rank")? as usize,
                observed: num(f[3], "observed")? == 1,
                clicks: num(f[4], "clicks")? as u32,
                relevance: num(f[5], "relevance")? as u8,
            });
        }
        let params = params.ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing '# eta=.. k=..' parameter line".into(),
        })?;
        let log = ClickLog { records, params };
        log.validate()?;
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

pub const CLICK_HEADER: &str = "query_id,doc_id,shown_rank,observed,clicks,relevance";

fn parse_param_comment(comment: &str) -> std::result::Result<ClickParams, String> {
    let mut kv = HashMap::new();
    for tok in comment.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("bad parameter token {tok:?}"))?;
        kv.insert(k, v);
    }
    fn get<T: std::str::FromStr>(kv: &HashMap<&str, &str>, key: &str) -> std::result::Result<T, String> {
        kv.get(key)
            .ok_or_else(|| format!("missing parameter {key}"))?
            .parse()
            .map_err(|_| format!("bad parameter {key}"))
    }
    Ok(ClickParams {
        eta: get(&kv, "eta")?,
        k: get(&kv, "k")?,
        noise: get(&kv, "noise")?,
        passes: get(&kv, "passes")?,
        seed: get(&kv, "seed")?,
    })
}

/// Base ranker and the queries it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRanker {
    pub model: LinearModel,
    pub sampled_queries: Vec<String>,
}

impl BaseRanker {
    /// The training queries not used to fit the base ranker.
    pub fn remaining(&self, train: &Dataset) -> Dataset {
        let used: HashSet<&str> = self.sampled_queries.iter().map(String::as_str).collect();
        train.filter_queries(|q| !used.contains(q))
    }
}

/// Fits a linear ranking SVM on the true binary labels of a seeded
/// `round(fraction · n)` (at least one) sample of queries.
pub fn train_base_ranker(train: &Dataset, fraction: f64, seed: u64, hinge: &HingeOptions) -> Result<BaseRanker> {
    if train.queries.is_empty() {
        return Err(Error::NoQueries);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "base fraction must lie in (0,1], got {fraction}"
        )));
    }
    let n = train.queries.len();
    let n_sample = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut ids: Vec<&str> = train.queries.iter().map(|q| q.query_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut Seed::new(seed).with_str("base-sample").rng());
    let mut sampled: Vec<String> = ids[..n_sample].iter().map(|s| s.to_string()).collect();
    sampled.sort();

    let chosen: HashSet<&str> = sampled.iter().map(String::as_str).collect();
    let mut pairs = Vec::new();
    for q in train.queries.iter().filter(|q| chosen.contains(q.query_id.as_str())) {
        for winner in q.documents.iter().filter(|d| d.is_relevant()) {
            for loser in q.documents.iter().filter(|d| !d.is_relevant()) {
                pairs.push(WeightedPair {
                    query_id: q.query_id.clone(),
                    winner: winner.doc_id.clone(),
                    loser: loser.doc_id.clone(),
                    weight: 1.0,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateBaseSample);
    }
    let opts = HingeOptions {
        seed: Seed::new(seed).with_str("base-fit").rng().random(),
        ..*hinge
    };
    let model = pairwise_hinge_fit(&pairs, &train.index(), &opts)?;
    Ok(BaseRanker {
        model,
        sampled_queries: sampled,
    })
}

/// Ranks every query of `ds` by descending model score (ties by doc id).
pub fn produce_rankings(model: &LinearModel, ds: &Dataset) -> Result<Rankings> {
    model.check_dim(ds.feature_dim)?;
    Ok(ds
        .queries
        .iter()
        .map(|q| {
            let list = RankedList::from_scores(
                &q.query_id,
                q.documents
                    .iter()
                    .map(|d| (d.doc_id.as_str(), model.score(&d.features))),
            );
            (q.query_id.clone(), list)
        })
        .collect())
}

/// `relevance · rank^(-η)`.
pub fn click_probability(relevance: u8, rank: usize, eta: f64) -> Result<f64> {
    if rank < 1 {
        return Err(Error::InvalidArgument("rank must be >= 1".into()));
    }
    if relevance == 0 {
        return Ok(0.0);
    }
    Ok((rank as f64).powf(-eta))
}

/// Samples clicks for every query of `ds` shown in the order of `rankings`.
///
/// Each pass draws one uniform per shown document from a substream keyed by
/// `(seed, pass, query_id)`. With `noise > 0`, `round(C·noise/(1-noise))`
/// extra clicks are placed on observed irrelevant documents, drawn with
/// weight `rank^(-η)`, where `C` is the number of noiseless clicks.
pub fn simulate_clicks(rankings: &Rankings, ds: &Dataset, params: &ClickParams) -> Result<ClickLog> {
    params.validate()?;
    let root = Seed::new(params.seed).with_str("clicks");

    let per_query: Vec<Vec<ClickRecord>> = ds
        .queries
        .par_iter()
        .map(|q| -> Result<Vec<ClickRecord>> {
            let ranking = rankings
                .get(&q.query_id)
                .ok_or_else(|| Error::UnknownQuery(q.query_id.clone()))?;
            if !ranking.is_permutation_of(q) {
                return Err(Error::MismatchedDocuments(q.query_id.clone()));
            }
            let docs: HashMap<&str, u8> = q.documents.iter().map(|d| (d.doc_id.as_str(), d.relevance)).collect();
            let mut records: Vec<ClickRecord> = ranking
                .doc_ids
                .iter()
                .enumerate()
                .map(|(i, d)| ClickRecord {
                    query_id: q.query_id.clone(),
                    doc_id: d.clone(),
                    shown_rank: i + 1,
                    observed: i < params.k,
                    clicks: 0,
                    relevance: docs[d.as_str()],
                })
                .collect();
            for pass in 0..params.passes {
                let mut rng = root.with_u64(pass as u64).with_str(&q.query_id).rng();
                for r in records.iter_mut().take(params.k) {
                    let u: f64 = rng.random();
                    if u < click_probability(r.relevance, r.shown_rank, params.eta)? {
                        r.clicks += 1;
                    }
                }
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<ClickRecord> = per_query.into_iter().flatten().collect();

    if params.noise > 0.0 {
        let clean: u64 = records.iter().map(|r| u64::from(r.clicks)).sum();
        let extra = (clean as f64 * params.noise / (1.0 - params.noise)).round() as u64;
        if extra > 0 {
            let mut candidates = Vec::new();
            let mut cumulative = Vec::new();
            let mut total = 0.0;
            for (i, r) in records.iter().enumerate() {
                if r.observed && r.relevance == 0 {
                    total += (r.shown_rank as f64).powf(-params.eta);
                    candidates.push(i);
                    cumulative.push(total);
                }
            }
            if candidates.is_empty() {
                return Err(Error::NoNoiseTargets);
            }
            let mut rng = root.with_str("noise").rng();
            for _ in 0..extra {
                let u = rng.random::<f64>() * total;
                let j = cumulative.partition_point(|&c| c <= u).min(candidates.len() - 1);
                records[candidates[j]].clicks += 1;
            }
        }
    }

    Ok(ClickLog {
        records,
        params: *params,
    })
}
