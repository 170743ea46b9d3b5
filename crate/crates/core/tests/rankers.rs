use heckrank::clicksim::{
    produce_rankings, simulate_clicks, train_base_ranker, ClickLog, ClickParams, ClickRecord, Rankings,
};
use heckrank::dataset::{
    binarize_relevance, generate_synthetic, split_by_query, Dataset, Document, Query, SyntheticSpec,
};
use heckrank::ensembles::{combinedw_train, EnsembleModel};
use heckrank::estimators::HingeOptions;
use heckrank::harness::mean_stderr;
use heckrank::metrics::{evaluate, ArrrDenominator, EvalResult, Judgments};
use heckrank::rankers::{heckman_train, naive_train, propensity_train, score_all, HeckmanOptions};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Setup {
    train: Dataset,
    test: Dataset,
    rankings: Rankings,
}

fn setup(seed: u64, spec: SyntheticSpec) -> Setup {
    let ds = binarize_relevance(generate_synthetic(&SyntheticSpec { seed, ..spec }).unwrap(), 2);
    let (train, test) = split_by_query(&ds, 0.7, seed).unwrap();
    let base = train_base_ranker(&train, 0.01, seed, &HingeOptions::default()).unwrap();
    let train = base.remaining(&train);
    let rankings = produce_rankings(&base.model, &train).unwrap();
    Setup { train, test, rankings }
}

fn clicks(s: &Setup, eta: f64, k: usize, seed: u64) -> ClickLog {
    simulate_clicks(
        &s.rankings,
        &s.train,
        &ClickParams {
            eta,
            k,
            noise: 0.0,
            passes: 15,
            seed,
        },
    )
    .unwrap()
}

fn eval(r: &Rankings, test: &Dataset) -> EvalResult {
    evaluate(r, &Judgments::from_dataset(test), 10, ArrrDenominator::default()).unwrap()
}

fn small() -> SyntheticSpec {
    SyntheticSpec {
        n_queries: 150,
        docs_per_query: 15,
        feature_dim: 8,
        ..SyntheticSpec::default()
    }
}

#[test]
fn propensity_without_bias_is_naive() {
    let s = setup(1, small());
    let log = clicks(&s, 1.0, 5, 1);
    let hinge = HingeOptions {
        seed: 42,
        ..HingeOptions::default()
    };
    let naive = naive_train(&log, &s.train, &hinge).unwrap();
    let prop = propensity_train(&log, &s.train, 0.0, &hinge).unwrap();
    assert_eq!(naive.scorer, prop.scorer);
    assert_eq!(naive.stats.pairs, prop.stats.pairs);
}

#[test]
fn heckman_reads_unobserved_records_and_ranks_every_document() {
    let s = setup(2, small());
    let log = clicks(&s, 1.0, 5, 2);
    let naive = naive_train(&log, &s.train, &HingeOptions::default()).unwrap();
    let heck = heckman_train(&log, &s.train, &HeckmanOptions::default()).unwrap();
    assert!(heck.stats.records_used > naive.stats.records_used);
    assert_eq!(heck.stats.records_used, log.records.len());

    let rankings = score_all(&heck, &s.test).unwrap();
    for q in &s.test.queries {
        assert!(rankings[&q.query_id].is_permutation_of(q));
        assert_eq!(rankings[&q.query_id].len(), q.documents.len());
    }
}

#[test]
fn heckman_rejects_logs_without_selection_variation() {
    let s = setup(3, small());
    let log = clicks(&s, 0.0, 15, 3);
    assert!(matches!(
        heckman_train(&log, &s.train, &HeckmanOptions::default()),
        Err(heckrank::Error::NoSelectionVariation)
    ));
}

#[test]
fn naive_with_full_information_recovers_the_ordering() {
    let spec = SyntheticSpec {
        score_noise: 0.0,
        ..small()
    };
    let s = setup(4, spec);
    let log = clicks(&s, 0.0, 15, 4);
    let naive = naive_train(&log, &s.train, &HingeOptions::default()).unwrap();
    let r = eval(&score_all(&naive, &s.test).unwrap(), &s.test);
    assert!(r.ndcg_at_p >= 0.95, "nDCG@10 {}", r.ndcg_at_p);
}

#[test]
fn propensity_at_least_naive_under_position_bias_without_cutoff() {
    let mut diffs = Vec::new();
    for seed in 1..=5 {
        let s = setup(seed, SyntheticSpec::default());
        let log = clicks(&s, 1.0, 20, seed);
        let hinge = HingeOptions {
            seed,
            ..HingeOptions::default()
        };
        let naive = naive_train(&log, &s.train, &hinge).unwrap();
        let prop = propensity_train(&log, &s.train, 1.0, &hinge).unwrap();
        let n = eval(&score_all(&naive, &s.test).unwrap(), &s.test).ndcg_at_p;
        let p = eval(&score_all(&prop, &s.test).unwrap(), &s.test).ndcg_at_p;
        diffs.push(p - n);
    }
    let (mean, _) = mean_stderr(&diffs);
    assert!(mean >= 0.0, "propensity - naive nDCG@10 = {mean} ({diffs:?})");
}

#[test]
fn heckman_beats_naive_arrr_under_pure_selection_bias() {
    let mut h = Vec::new();
    let mut n = Vec::new();
    for seed in 1..=5 {
        let s = setup(seed, SyntheticSpec::default());
        let log = clicks(&s, 0.0, 10, seed);
        let naive = naive_train(
            &log,
            &s.train,
            &HingeOptions {
                seed,
                ..HingeOptions::default()
            },
        )
        .unwrap();
        let heck = heckman_train(&log, &s.train, &HeckmanOptions::default()).unwrap();
        n.push(eval(&score_all(&naive, &s.test).unwrap(), &s.test).arrr);
        h.push(eval(&score_all(&heck, &s.test).unwrap(), &s.test).arrr);
    }
    let (hm, _) = mean_stderr(&h);
    let (nm, _) = mean_stderr(&n);
    assert!(hm < nm, "Heckman ARRR {hm} vs Naive ARRR {nm}");
}

/// Selection on `f1` through a probit, clicks depending only on `f2`: the
/// selection is ignorable and the Mills coefficient should vanish.
fn independent_selection_log(rows: &[(f64, f64, bool, bool)]) -> (Dataset, ClickLog) {
    let mut queries = Vec::new();
    let mut records = Vec::new();
    for (qi, chunk) in rows.chunks(10).enumerate() {
        let qid = format!("q{qi:03}");
        let mut docs = Vec::new();
        for (di, &(f1, f2, observed, clicked)) in chunk.iter().enumerate() {
            let doc_id = format!("d{di}");
            docs.push(Document {
                doc_id: doc_id.clone(),
                features: vec![f1, f2],
                relevance_raw: 0,
                relevance: 0,
            });
            records.push(ClickRecord {
                query_id: qid.clone(),
                doc_id,
                shown_rank: di + 1,
                observed,
                clicks: u32::from(clicked),
                relevance: 0,
            });
        }
        queries.push(Query {
            query_id: qid,
            documents: docs,
        });
    }
    let params = ClickParams {
        eta: 0.0,
        k: 10,
        noise: 0.0,
        passes: 1,
        seed: 0,
    };
    (Dataset::new(queries, 2).unwrap(), ClickLog { records, params })
}

#[test]
fn mills_coefficient_vanishes_when_selection_is_ignorable() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rows: Vec<(f64, f64, bool, bool)> = (0..2000)
        .map(|_| {
            let f1: f64 = rng.random();
            let f2: f64 = rng.random();
            let e: f64 = StandardNormal.sample(&mut rng);
            let observed = -0.5 + 1.5 * f1 + e > 0.0;
            let clicked = observed && rng.random::<f64>() < 0.2 + 0.6 * f2;
            (f1, f2, observed, clicked)
        })
        .collect();

    let sigma_of = |rows: &[(f64, f64, bool, bool)]| {
        let (ds, log) = independent_selection_log(rows);
        let m = heckman_train(&log, &ds, &HeckmanOptions::default()).unwrap();
        m.heckman().unwrap().sigma
    };
    let sigma = sigma_of(&rows);

    let boots: Vec<f64> = (0..50)
        .map(|_| {
            let resample: Vec<_> = (0..rows.len()).map(|_| *rows.choose(&mut rng).unwrap()).collect();
            sigma_of(&resample)
        })
        .collect();
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let se = (boots.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    assert!(sigma.abs() < 3.0 * se, "sigma {sigma}, bootstrap se {se}");
}

#[test]
fn combinedw_puts_negative_weight_on_the_rank_that_drove_clicks() {
    let s = setup(5, small());
    let log = clicks(&s, 1.0, 5, 5);
    // Position-bias ranks: the order clicks were generated in.
    let shown = s.rankings.clone();
    // Selection ranks: the reverse order, unrelated to where clicks landed.
    let reversed: Rankings = shown
        .iter()
        .map(|(q, l)| {
            let mut l = l.clone();
            l.doc_ids.reverse();
            (q.clone(), l)
        })
        .collect();
    let model = combinedw_train(&shown, &reversed, &log).unwrap();
    let EnsembleModel::CombinedW { w1, w2, .. } = model else {
        unreachable!()
    };
    assert!(w1 < 0.0, "w1 = {w1}");
    assert!(w2 > 0.0, "w2 = {w2}");
}
