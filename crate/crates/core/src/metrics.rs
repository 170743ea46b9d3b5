//! ARRR and nDCG@p against binary ground-truth labels.

use std::collections::HashMap;

use crate::clicksim::{RankedList, Rankings};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_NDCG_P: usize = 10;

/// Binary relevance judgments by query and document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Judgments {
    labels: HashMap<String, HashMap<String, u8>>,
}

impl Judgments {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let labels = ds
            .queries
            .iter()
            .map(|q| {
                let docs = q.documents.iter().map(|d| (d.doc_id.clone(), d.relevance)).collect();
                (q.query_id.clone(), docs)
            })
            .collect();
        Judgments { labels }
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, relevance: u8) {
        self.labels
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), relevance);
    }

    pub fn get(&self, query_id: &str, doc_id: &str) -> Result<u8> {
        self.labels
            .get(query_id)
            .and_then(|q| q.get(doc_id))
            .copied()
            .ok_or_else(|| Error::UnknownDocument {
                query_id: query_id.to_string(),
                doc_id: doc_id.to_string(),
            })
    }

    fn gains(&self, ranking: &RankedList) -> Result<Vec<u8>> {
        ranking.doc_ids.iter().map(|d| self.get(&ranking.query_id, d)).collect()
    }
}

/// Divisor used by ARRR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrrDenominator {
    /// Queries with at least one relevant document.
    #[default]
    QueriesWithRelevant,
    /// Every evaluated query.
    AllQueries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub arrr: f64,
    pub ndcg_at_p: f64,
    pub p: usize,
    pub n_queries: usize,
    /// Queries without any relevant document.
    pub n_skipped: usize,
}

/// Sum of 1-based ranks of relevant documents, averaged over queries.
pub fn arrr(rankings: &Rankings, judgments: &Judgments, denominator: ArrrDenominator) -> Result<f64> {
    let mut total = 0usize;
    let mut with_relevant = 0usize;
    for list in rankings.values() {
        let gains = judgments.gains(list)?;
        let sum: usize = gains
            .iter()
            .enumerate()
            .filter(|(_, &g)| g > 0)
            .map(|(i, _)| i + 1)
            .sum();
        if gains.iter().any(|&g| g > 0) {
            with_relevant += 1;
        }
        total += sum;
    }
    if with_relevant == 0 {
        return Err(Error::NoRelevantQueries);
    }
    let denom = match denominator {
        ArrrDenominator::QueriesWithRelevant => with_relevant,
        ArrrDenominator::AllQueries => rankings.len(),
    };
    Ok(total as f64 / denom as f64)
}

fn dcg_of(gains: &[u8], p: usize) -> f64 {
    gains
        .iter()
        .take(p)
        .enumerate()
        .map(|(i, &rel)| ((1u32 << rel.min(31)) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// `Σ_{i ≤ min(p, n)} (2^rel_i - 1) / log2(i + 1)`.
pub fn dcg_at(ranking: &RankedList, judgments: &Judgments, p: usize) -> Result<f64> {
    if p < 1 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    Ok(dcg_of(&judgments.gains(ranking)?, p))
}

/// DCG@p over the ideal DCG@p. `None` for a query without relevant documents.
pub fn ndcg_at(ranking: &RankedList, judgments: &Judgments, p: usize) -> Result<Option<f64>> {
    if p < 1 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    let gains = judgments.gains(ranking)?;
    let mut ideal = gains.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_of(&ideal, p);
    if idcg == 0.0 {
        return Ok(None);
    }
    Ok(Some(dcg_of(&gains, p) / idcg))
}

/// Both metrics over a set of rankings. nDCG is macro-averaged over queries
/// with relevant documents, summed in query-id order.
pub fn evaluate(
    rankings: &Rankings,
    judgments: &Judgments,
    p: usize,
    denominator: ArrrDenominator,
) -> Result<EvalResult> {
    let arrr = arrr(rankings, judgments, denominator)?;
    let mut sum = 0.0;
    let mut counted = 0usize;
    for list in rankings.values() {
        if let Some(v) = ndcg_at(list, judgments, p)? {
            sum += v;
            counted += 1;
        }
    }
    Ok(EvalResult {
        arrr,
        ndcg_at_p: sum / counted as f64,
        p,
        n_queries: rankings.len(),
        n_skipped: rankings.len() - counted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(rels: &[u8]) -> (RankedList, Judgments) {
        let mut j = Judgments::default();
        let ids: Vec<String> = (0..rels.len()).map(|i| format!("d{i}")).collect();
        for (id, &r) in ids.iter().zip(rels) {
            j.insert("q", id, r);
        }
        (
            RankedList {
                query_id: "q".into(),
                doc_ids: ids,
            },
            j,
        )
    }

    #[test]
    fn arrr_sums_relevant_ranks() {
        let (l, j) = setup(&[0, 1, 0, 0, 1]);
        let r = Rankings::from([("q".to_string(), l)]);
        assert_eq!(arrr(&r, &j, ArrrDenominator::default()).unwrap(), 7.0);
    }

    #[test]
    fn arrr_perfect_floor_and_reversal() {
        let mut j = Judgments::default();
        let mut r = Rankings::new();
        for q in ["a", "b"] {
            j.insert(q, "x", 1);
            j.insert(q, "y", 0);
            r.insert(
                q.into(),
                RankedList {
                    query_id: q.into(),
                    doc_ids: vec!["x".into(), "y".into()],
                },
            );
        }
        assert_eq!(arrr(&r, &j, ArrrDenominator::default()).unwrap(), 1.0);

        let mut rels = vec![0u8; 10];
        rels[0] = 1;
        let (mut l, j) = setup(&rels);
        let single = Rankings::from([("q".to_string(), l.clone())]);
        assert_eq!(arrr(&single, &j, ArrrDenominator::default()).unwrap(), 1.0);
        l.doc_ids.reverse();
        let single = Rankings::from([("q".to_string(), l)]);
        assert_eq!(arrr(&single, &j, ArrrDenominator::default()).unwrap(), 10.0);
    }

    #[test]
    fn arrr_denominators() {
        let (l1, mut j) = setup(&[0, 1]);
        j.insert("z", "a", 0);
        let r = Rankings::from([
            ("q".to_string(), l1),
            (
                "z".to_string(),
                RankedList {
                    query_id: "z".into(),
                    doc_ids: vec!["a".into()],
                },
            ),
        ]);
        assert_eq!(arrr(&r, &j, ArrrDenominator::QueriesWithRelevant).unwrap(), 2.0);
        assert_eq!(arrr(&r, &j, ArrrDenominator::AllQueries).unwrap(), 1.0);
        let e = evaluate(&r, &j, 10, ArrrDenominator::default()).unwrap();
        assert_eq!((e.n_queries, e.n_skipped), (2, 1));
    }

    #[test]
    fn arrr_without_relevant_docs_errors() {
        let (l, j) = setup(&[0, 0]);
        let r = Rankings::from([("q".to_string(), l)]);
        assert!(matches!(
            arrr(&r, &j, ArrrDenominator::default()),
            Err(Error::NoRelevantQueries)
        ));
    }

    #[test]
    fn dcg_examples() {
        let (l, j) = setup(&[1, 0, 1]);
        assert!((dcg_at(&l, &j, 3).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(dcg_at(&l, &j, 30).unwrap(), dcg_at(&l, &j, 3).unwrap());
        let (l, j) = setup(&[0, 0, 0]);
        assert_eq!(dcg_at(&l, &j, 3).unwrap(), 0.0);
        assert!(dcg_at(&l, &j, 0).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let (l, j) = setup(&[1, 0, 1]);
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at(&l, &j, 3).unwrap().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9197).abs() < 1e-3);

        let (l, j) = setup(&[1, 1, 0]);
        assert_eq!(ndcg_at(&l, &j, 3).unwrap(), Some(1.0));

        let mut rels = vec![0u8; 12];
        rels[11] = 1;
        let (l, j) = setup(&rels);
        assert_eq!(ndcg_at(&l, &j, 10).unwrap(), Some(0.0));

        let (l, j) = setup(&[0, 0]);
        assert_eq!(ndcg_at(&l, &j, 10).unwrap(), None);
    }

    #[test]
    fn unknown_document_is_an_error() {
        let (mut l, j) = setup(&[1]);
        l.doc_ids.push("ghost".into());
        assert!(ndcg_at(&l, &j, 10).is_err());
    }
}
