//! Combining a selection-bias ranker with a position-bias ranker.

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::DMatrix;

use crate::clicksim::{ClickLog, RankedList, Rankings};
use crate::error::{Error, Result};
use crate::estimators::{logistic_fit, FitDiagnostics, FitOptions};
use crate::model_text::KeyValues;

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleModel {
    /// Logistic click model on the two input ranks:
    /// `P(click) = σ(w0 + w1·rank_s + w2·rank_p)`.
    CombinedW {
        w0: f64,
        w1: f64,
        w2: f64,
        diagnostics: FitDiagnostics,
    },
    /// Borda count; no parameters.
    RankAgg,
}

impl EnsembleModel {
    pub fn combined(w0: f64, w1: f64, w2: f64) -> Self {
        EnsembleModel::CombinedW {
            w0,
            w1,
            w2,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        match self {
            EnsembleModel::CombinedW {
                w0,
                w1,
                w2,
                diagnostics,
            } => {
                kv.set("kind", "combinedw");
                kv.set("converged", diagnostics.converged);
                kv.set("w0", w0);
                kv.set("w1", w1);
                kv.set("w2", w2);
            }
            EnsembleModel::RankAgg => kv.set("kind", "rankagg"),
        }
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        match kv.require("kind")? {
            "combinedw" => Ok(EnsembleModel::CombinedW {
                w0: kv.get_parsed("w0")?,
                w1: kv.get_parsed("w1")?,
                w2: kv.get_parsed("w2")?,
                diagnostics: FitDiagnostics {
                    converged: kv.get_parsed("converged").unwrap_or(false),
                    ..Default::default()
                },
            }),
            "rankagg" => Ok(EnsembleModel::RankAgg),
            other => Err(Error::ModelFormat(format!("unknown ensemble kind {other:?}"))),
        }
    }
}

fn same_documents(a: &RankedList, b: &RankedList) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let set: HashSet<&str> = a.doc_ids.iter().map(String::as_str).collect();
    set.len() == a.len() && b.doc_ids.iter().all(|d| set.contains(d.as_str()))
}

fn pair_for<'a>(ranks_s: &'a Rankings, ranks_p: &'a Rankings, qid: &str) -> Result<(&'a RankedList, &'a RankedList)> {
    let s = ranks_s.get(qid).ok_or_else(|| Error::UnknownQuery(qid.to_string()))?;
    let p = ranks_p.get(qid).ok_or_else(|| Error::UnknownQuery(qid.to_string()))?;
    if !same_documents(s, p) {
        return Err(Error::MismatchedDocuments(qid.to_string()));
    }
    Ok((s, p))
}

/// Fits `(w0, w1, w2)` by logistic regression of clicked-at-least-once on the
/// two ranks, over every record of the click log (unshown documents included
/// with label 0).
pub fn combinedw_train(ranks_s: &Rankings, ranks_p: &Rankings, clicks: &ClickLog) -> Result<EnsembleModel> {
    if ranks_s.len() != ranks_p.len() || ranks_s.keys().any(|q| !ranks_p.contains_key(q)) {
        return Err(Error::InvalidArgument("rankings cover different queries".into()));
    }
    type RankPair<'a> = (HashMap<&'a str, usize>, HashMap<&'a str, usize>);
    let mut lookup: HashMap<&str, RankPair> = HashMap::new();
    for qid in ranks_s.keys() {
        let (s, p) = pair_for(ranks_s, ranks_p, qid)?;
        lookup.insert(qid.as_str(), (s.ranks(), p.ranks()));
    }

    let mut rows = Vec::with_capacity(clicks.records.len());
    let mut labels = Vec::with_capacity(clicks.records.len());
    for r in &clicks.records {
        let (s, p) = lookup
            .get(r.query_id.as_str())
            .ok_or_else(|| Error::UnknownQuery(r.query_id.clone()))?;
        let missing = || Error::UnknownDocument {
            query_id: r.query_id.clone(),
            doc_id: r.doc_id.clone(),
        };
        let rs = *s.get(r.doc_id.as_str()).ok_or_else(missing)?;
        let rp = *p.get(r.doc_id.as_str()).ok_or_else(missing)?;
        rows.push([rs as f64, rp as f64]);
        labels.push(r.clicks > 0);
    }
    let x = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
    let m = logistic_fit(&x, &labels, &FitOptions::default())?;
    Ok(EnsembleModel::CombinedW {
        w0: m.intercept.unwrap_or(0.0),
        w1: m.weights[0],
        w2: m.weights[1],
        diagnostics: m.diagnostics,
    })
}

/// Orders a query's documents by descending predicted click probability.
/// Sorting uses the logit, which is strictly monotone in the probability and
/// does not saturate.
pub fn combinedw_rank(
    model: &EnsembleModel,
    ranks_s: &Rankings,
    ranks_p: &Rankings,
    query_id: &str,
) -> Result<RankedList> {
    let EnsembleModel::CombinedW { w0, w1, w2, .. } = model else {
        return Err(Error::InvalidArgument("combinedw_rank needs a CombinedW model".into()));
    };
    let (s, p) = pair_for(ranks_s, ranks_p, query_id)?;
    let rp = p.ranks();
    Ok(RankedList::from_scores(
        query_id,
        s.doc_ids.iter().enumerate().map(|(i, d)| {
            let logit = w0 + w1 * (i + 1) as f64 + w2 * rp[d.as_str()] as f64;
            (d.as_str(), logit)
        }),
    ))
}

/// Borda points per document over rankings of the same documents: each
/// ranking awards a document the number of documents it beats, `n - rank`.
pub fn borda_scores(lists: &[&RankedList]) -> Result<BTreeMap<String, usize>> {
    let first = lists
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to aggregate".into()))?;
    for l in &lists[1..] {
        if !same_documents(first, l) {
            return Err(Error::MismatchedDocuments(first.query_id.clone()));
        }
    }
    let n = first.len();
    let mut totals: BTreeMap<String, usize> = first.doc_ids.iter().map(|d| (d.clone(), 0)).collect();
    for l in lists {
        for (i, d) in l.doc_ids.iter().enumerate() {
            *totals.get_mut(d).expect("checked same documents") += n - (i + 1);
        }
    }
    Ok(totals)
}

/// Borda count over any number of rankings: descending total points, ties by
/// ascending doc_id.
pub fn borda_aggregate_many(lists: &[&RankedList]) -> Result<RankedList> {
    let totals = borda_scores(lists)?;
    let mut docs: Vec<(String, usize)> = totals.into_iter().collect();
    docs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedList {
        query_id: lists[0].query_id.clone(),
        doc_ids: docs.into_iter().map(|(d, _)| d).collect(),
    })
}

/// Two-ranking Borda aggregation: `score = (n - rank_s) + (n - rank_p)`.
pub fn borda_aggregate(ranks_s: &RankedList, ranks_p: &RankedList) -> Result<RankedList> {
    borda_aggregate_many(&[ranks_s, ranks_p])
}

/// Applies an ensemble to every query present in both rankings.
pub fn ensemble_rank_all(model: &EnsembleModel, ranks_s: &Rankings, ranks_p: &Rankings) -> Result<Rankings> {
    ranks_s
        .keys()
        .map(|qid| {
            let list = match model {
                EnsembleModel::CombinedW { .. } => combinedw_rank(model, ranks_s, ranks_p, qid)?,
                EnsembleModel::RankAgg => {
                    let (s, p) = pair_for(ranks_s, ranks_p, qid)?;
                    borda_aggregate(s, p)?
                }
            };
            Ok((qid.clone(), list))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str]) -> RankedList {
        RankedList {
            query_id: "q".into(),
            doc_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn single(l: RankedList) -> Rankings {
        Rankings::from([("q".to_string(), l)])
    }

    #[test]
    fn borda_unanimous_keeps_order() {
        let a = list(&["c", "a", "b", "d"]);
        assert_eq!(borda_aggregate(&a, &a).unwrap(), a);
    }

    #[test]
    fn borda_reverse_is_all_ties() {
        let a = list(&["c", "a", "d", "b"]);
        let mut r = a.clone();
        r.doc_ids.reverse();
        assert_eq!(borda_aggregate(&a, &r).unwrap().doc_ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn borda_rejects_mismatched_sets() {
        assert!(borda_aggregate(&list(&["a", "b"]), &list(&["a", "c"])).is_err());
        assert!(borda_aggregate(&list(&["a", "b"]), &list(&["a"])).is_err());
    }

    #[test]
    fn combinedw_follows_the_weighted_input() {
        let s = single(list(&["b", "c", "a"]));
        let p = single(list(&["a", "c", "b"]));
        let only_s = EnsembleModel::combined(0.0, -1.0, 0.0);
        assert_eq!(combinedw_rank(&only_s, &s, &p, "q").unwrap(), s["q"]);
        let only_p = EnsembleModel::combined(0.0, 0.0, -1.0);
        assert_eq!(combinedw_rank(&only_p, &s, &p, "q").unwrap(), p["q"]);
        assert!(matches!(
            combinedw_rank(&only_p, &s, &p, "nope"),
            Err(Error::UnknownQuery(_))
        ));
    }

    #[test]
    fn combinedw_scale_invariance() {
        let s = single(list(&["b", "c", "a", "d", "e"]));
        let p = single(list(&["a", "c", "e", "b", "d"]));
        let m1 = EnsembleModel::combined(0.3, -0.7, -0.2);
        let m2 = EnsembleModel::combined(1.0, -7.0, -2.0);
        assert_eq!(
            combinedw_rank(&m1, &s, &p, "q").unwrap(),
            combinedw_rank(&m2, &s, &p, "q").unwrap()
        );
    }

    #[test]
    fn text_round_trip() {
        let m = EnsembleModel::combined(0.5, -0.25, -0.125);
        let back = EnsembleModel::from_kv(&KeyValues::parse(&m.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, m);
        let back = EnsembleModel::from_kv(&EnsembleModel::RankAgg.to_kv()).unwrap();
        assert_eq!(back, EnsembleModel::RankAgg);
    }
}
