//! Ranking datasets: LETOR text ingestion, synthetic generation with a known
//! linear ground truth, label binarization and seeded query splits.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeding::Seed;

/// Grades above this value count as relevant.
pub const DEFAULT_RELEVANCE_THRESHOLD: u8 = 2;
pub const MAX_GRADE: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub features: Vec<f64>,
    pub relevance_raw: u8,
    pub relevance: u8,
}

impl Document {
    pub fn is_relevant(&self) -> bool {
        self.relevance == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub query_id: String,
    pub documents: Vec<Document>,
}

impl Query {
    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }
}

/// Generator parameters and hidden ground truth of a synthetic dataset.
///
/// Only oracle tests may look at `true_weights` and `true_scores`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMeta {
    pub spec: SyntheticSpec,
    pub true_weights: Vec<f64>,
    /// Per query, per document latent score (linear score plus disturbance).
    pub true_scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub queries: Vec<Query>,
    pub feature_dim: usize,
    pub meta: Option<SyntheticMeta>,
}

impl Dataset {
    pub fn new(queries: Vec<Query>, feature_dim: usize) -> Result<Self> {
        let ds = Dataset {
            queries,
            feature_dim,
            meta: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks structural invariants: non-empty queries, unique ids, consistent dimension.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::NoQueries);
        }
        let mut qids = HashSet::new();
        for q in &self.queries {
            if !qids.insert(q.query_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate query id {}", q.query_id)));
            }
            if q.documents.is_empty() {
                return Err(Error::InvalidArgument(format!("query {} has no documents", q.query_id)));
            }
            let mut dids = HashSet::new();
            for d in &q.documents {
                if !dids.insert(d.doc_id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate doc id {} in query {}",
                        d.doc_id, q.query_id
                    )));
                }
                if d.features.len() != self.feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.feature_dim,
                        actual: d.features.len(),
                    });
                }
                if d.relevance_raw > MAX_GRADE || d.relevance > 1 {
                    return Err(Error::InvalidArgument(format!(
                        "label out of range for {}/{}",
                        q.query_id, d.doc_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_documents(&self) -> usize {
        self.queries.iter().map(|q| q.documents.len()).sum()
    }

    pub fn query(&self, query_id: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }

    /// Hash index from `(query_id, doc_id)` to feature vectors.
    pub fn index(&self) -> DocIndex<'_> {
        let mut map = HashMap::with_capacity(self.num_documents());
        for q in &self.queries {
            for d in &q.documents {
                map.insert((q.query_id.as_str(), d.doc_id.as_str()), d);
            }
        }
        DocIndex {
            map,
            feature_dim: self.feature_dim,
        }
    }

    /// Keeps the queries whose id satisfies `keep`, in original order.
    pub fn filter_queries(&self, mut keep: impl FnMut(&str) -> bool) -> Dataset {
        let queries = self.queries.iter().filter(|q| keep(&q.query_id)).cloned().collect();
        Dataset {
            queries,
            feature_dim: self.feature_dim,
            meta: None,
        }
    }
}

/// Lookup of documents by `(query_id, doc_id)`.
#[derive(Debug)]
pub struct DocIndex<'a> {
    map: HashMap<(&'a str, &'a str), &'a Document>,
    feature_dim: usize,
}

impl<'a> DocIndex<'a> {
    pub fn get(&self, query_id: &str, doc_id: &str) -> Result<&'a Document> {
        self.map
            .get(&(query_id, doc_id))
            .copied()
            .ok_or_else(|| Error::UnknownDocument {
                query_id: query_id.to_string(),
                doc_id: doc_id.to_string(),
            })
    }

    pub fn features(&self, query_id: &str, doc_id: &str) -> Result<&'a [f64]> {
        self.get(query_id, doc_id).map(|d| d.features.as_slice())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses LETOR / SVMlight ranking text: `<rel> qid:<q> <fid>:<val> ... [# comment]`.
///
/// Documents are grouped by qid in first-appearance order and absent feature
/// ids are zero-filled. A `docid = X` entry in the trailing comment becomes the
/// document id, otherwise the zero-padded position within the query is used.
pub fn parse_letor(text: &str) -> Result<Dataset> {
    struct Row {
        grade: u8,
        sparse: Vec<(usize, f64)>,
        doc_id: Option<String>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let mut feature_dim = 0usize;

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let (body, comment) = match raw_line.split_once('#') {
            Some((b, c)) => (b, Some(c)),
            None => (raw_line, None),
        };
        let mut tokens = body.split_whitespace();
        let Some(rel_tok) = tokens.next() else {
            continue;
        };
        let grade: u8 = rel_tok
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid relevance {rel_tok:?}")))?;
        if grade > MAX_GRADE {
            return Err(parse_err(
                line_no,
                format!("relevance grade {grade} outside [0, {MAX_GRADE}]"),
            ));
        }
        let qid = tokens
            .next()
            .and_then(|t| t.strip_prefix("qid:"))
            .filter(|q| !q.is_empty())
            .ok_or_else(|| parse_err(line_no, "missing qid"))?;

        let mut sparse = Vec::new();
        let mut last_fid = 0usize;
        for tok in tokens {
            let (fid, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, format!("malformed feature {tok:?}")))?;
            let fid: usize = fid
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid feature id {fid:?}")))?;
            if fid == 0 || fid <= last_fid {
                return Err(parse_err(
                    line_no,
                    format!("feature ids must be positive and strictly increasing at {fid}"),
                ));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(line_no, format!("non-numeric value {val:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {val}")));
            }
            last_fid = fid;
            sparse.push((fid, val));
        }
        feature_dim = feature_dim.max(last_fid);

        let doc_id = comment.and_then(comment_doc_id);
        if !groups.contains_key(qid) {
            order.push(qid.to_string());
        }
        groups
            .entry(qid.to_string())
            .or_default()
            .push(Row { grade, sparse, doc_id });
    }

    if order.is_empty() {
        return Err(Error::NoQueries);
    }

    let queries = order
        .into_iter()
        .map(|qid| {
            let rows = groups.remove(&qid).unwrap_or_default();
            let width = rows.len().to_string().len();
            let documents = rows
                .into_iter()
                .enumerate()
                .map(|(pos, row)| {
                    let mut features = vec![0.0; feature_dim];
                    for (fid, v) in row.sparse {
                        features[fid - 1] = v;
                    }
                    Document {
                        doc_id: row.doc_id.unwrap_or_else(|| format!("{pos:0width$}")),
                        features,
                        relevance_raw: row.grade,
                        relevance: u8::from(row.grade > DEFAULT_RELEVANCE_THRESHOLD),
                    }
                })
                .collect();
            Query {
                query_id: qid,
                documents,
            }
        })
        .collect();

    Dataset::new(queries, feature_dim)
}

fn comment_doc_id(comment: &str) -> Option<String> {
    let rest = comment.trim().strip_prefix("docid")?;
    let rest = rest.trim_start().strip_prefix('=')?;
    rest.split_whitespace().next().map(str::to_string)
}

/// Writes the dataset as dense LETOR lines with a `# docid = ...` comment.
pub fn serialize_letor(ds: &Dataset) -> String {
    let mut out = String::new();
    for q in &ds.queries {
        for d in &q.documents {
            let _ = write!(out, "{} qid:{}", d.relevance_raw, q.query_id);
            for (j, v) in d.features.iter().enumerate() {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
            let _ = writeln!(out, " # docid = {}", d.doc_id);
        }
    }
    out
}

pub fn read_letor(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_letor(&text)
}

pub fn write_letor(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_letor(ds)).map_err(|e| Error::io(path, e))
}

/// Sets `relevance = 1` iff `relevance_raw > threshold`.
pub fn binarize_relevance(mut ds: Dataset, threshold: u8) -> Dataset {
    for q in &mut ds.queries {
        for d in &mut q.documents {
            d.relevance = u8::from(d.relevance_raw > threshold);
        }
    }
    ds
}

/// Splits queries into `(train, test)` with `round(train_fraction * n)` training
/// queries. Query ids are sorted before the seeded shuffle so the split does
/// not depend on input order.
pub fn split_by_query(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.queries.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "split needs at least 2 queries, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0,1), got {train_fraction}"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut ids: Vec<&str> = ds.queries.iter().map(|q| q.query_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut Seed::new(seed).with_str("split").rng());
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();

    let train = ds.filter_queries(|q| train_ids.contains(q));
    let test = ds.filter_queries(|q| !train_ids.contains(q));
    Ok((train, test))
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub feature_dim: usize,
    pub relevant_fraction: f64,
    /// Standard deviation of the score disturbance, as a multiple of the
    /// standard deviation of the noiseless linear score.
    pub score_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_queries: 500,
            docs_per_query: 20,
            feature_dim: 20,
            relevant_fraction: 0.25,
            score_noise: 0.5,
            seed: 0,
        }
    }
}

/// Draws features uniformly from `[0,1]^d`, a hidden weight vector once, and
/// grades documents by global quantiles of `w*·f + disturbance` so that about
/// `relevant_fraction` of documents binarize to relevant.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_queries == 0 || spec.docs_per_query == 0 || spec.feature_dim == 0 {
        return Err(Error::InvalidArgument("synthetic counts must all be at least 1".into()));
    }
    if !(spec.relevant_fraction > 0.0 && spec.relevant_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relevant_fraction must lie in (0,1), got {}",
            spec.relevant_fraction
        )));
    }
    if !(spec.score_noise >= 0.0 && spec.score_noise.is_finite()) {
        return Err(Error::InvalidArgument("score_noise must be finite and >= 0".into()));
    }

    let root = Seed::new(spec.seed).with_str("synthetic");
    let mut rng = root.with_str("weights").rng();
    let true_weights: Vec<f64> = (0..spec.feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let score_sd = (true_weights.iter().map(|w| w * w).sum::<f64>() / 12.0).sqrt();
    let disturbance_sd = spec.score_noise * score_sd;

    let q_width = spec.n_queries.to_string().len();
    let d_width = spec.docs_per_query.to_string().len();
    let mut rng = root.with_str("documents").rng();
    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut true_scores = Vec::with_capacity(spec.n_queries);
    for qi in 0..spec.n_queries {
        let mut docs = Vec::with_capacity(spec.docs_per_query);
        let mut scores = Vec::with_capacity(spec.docs_per_query);
        for di in 0..spec.docs_per_query {
            let features: Vec<f64> = (0..spec.feature_dim).map(|_| rng.random::<f64>()).collect();
            let eps: f64 = StandardNormal.sample(&mut rng);
            let score = dot(&true_weights, &features) + disturbance_sd * eps;
            scores.push(score);
            docs.push(Document {
                doc_id: format!("d{di:0d_width$}"),
                features,
                relevance_raw: 0,
                relevance: 0,
            });
        }
        queries.push(Query {
            query_id: format!("q{qi:0q_width$}"),
            documents: docs,
        });
        true_scores.push(scores);
    }

    // Global quantile grading: top `relevant_fraction` get grades 3/4 (upper
    // half 4), the rest split into thirds for 0/1/2.
    let mut flat: Vec<(f64, usize, usize)> = true_scores
        .iter()
        .enumerate()
        .flat_map(|(qi, s)| s.iter().enumerate().map(move |(di, &v)| (v, qi, di)))
        .collect();
    flat.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let total = flat.len();
    let n_rel = ((spec.relevant_fraction * total as f64).round() as usize).clamp(1, total - 1);
    let n_irr = total - n_rel;
    for (pos, &(_, qi, di)) in flat.iter().enumerate() {
        let grade = if pos < n_rel {
            if pos < n_rel / 2 {
                4
            } else {
                3
            }
        } else {
            let r = pos - n_rel;
            2 - (3 * r / n_irr) as u8
        };
        let doc = &mut queries[qi].documents[di];
        doc.relevance_raw = grade;
        doc.relevance = u8::from(grade > DEFAULT_RELEVANCE_THRESHOLD);
    }

    let mut ds = Dataset::new(queries, spec.feature_dim)?;
    ds.meta = Some(SyntheticMeta {
        spec: spec.clone(),
        true_weights,
        true_scores,
    });
    Ok(ds)
}

/// Key/value sidecar describing how a synthetic dataset was generated.
pub fn serialize_meta(meta: &SyntheticMeta) -> String {
    let s = &meta.spec;
    let mut out = String::new();
    let _ = writeln!(out, "generator=synthetic");
    let _ = writeln!(out, "seed={}", s.seed);
    let _ = writeln!(out, "n_queries={}", s.n_queries);
    let _ = writeln!(out, "docs_per_query={}", s.docs_per_query);
    let _ = writeln!(out, "feature_dim={}", s.feature_dim);
    let _ = writeln!(out, "relevant_fraction={}", s.relevant_fraction);
    let _ = writeln!(out, "score_noise={}", s.score_noise);
    for (j, w) in meta.true_weights.iter().enumerate() {
        let _ = writeln!(out, "w{}={}", j + 1, w);
    }
    out
}

/// Reads a sidecar back. Per-document true scores are not stored and come back empty.
pub fn parse_meta(text: &str) -> Result<SyntheticMeta> {
    let kv = crate::model_text::KeyValues::parse(text)?;
    let spec = SyntheticSpec {
        seed: kv.get_parsed("seed")?,
        n_queries: kv.get_parsed("n_queries")?,
        docs_per_query: kv.get_parsed("docs_per_query")?,
        feature_dim: kv.get_parsed("feature_dim")?,
        relevant_fraction: kv.get_parsed("relevant_fraction")?,
        score_noise: kv.get_parsed("score_noise")?,
    };
    let true_weights = (1..=spec.feature_dim)
        .map(|j| kv.get_parsed(&format!("w{j}")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SyntheticMeta {
        spec,
        true_weights,
        true_scores: Vec::new(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
