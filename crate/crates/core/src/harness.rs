//! Experiment runner: split → base ranker → click simulation → training →
//! evaluation, swept over a grid of `(η, k, noise, seed)` cells.
//!
//! Per seed, the split, base ranker and base rankings are computed once and
//! shared by every cell, so cells of one seed differ only in click parameters.
//! Cells run concurrently; every random stream is keyed by content, so the
//! output does not depend on the schedule.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::clicksim::{
    produce_rankings, simulate_clicks, train_base_ranker, ClickLog, ClickParams, Rankings, DEFAULT_BASE_FRACTION,
    DEFAULT_PASSES,
};
use crate::dataset::{binarize_relevance, generate_synthetic, read_letor, split_by_query, Dataset, SyntheticSpec};
use crate::ensembles::{combinedw_train, ensemble_rank_all, EnsembleModel};
use crate::error::{Error, Result};
use crate::estimators::HingeOptions;
use crate::metrics::{evaluate, ArrrDenominator, EvalResult, Judgments, DEFAULT_NDCG_P};
use crate::model_text::KeyValues;
use crate::rankers::{heckman_train, naive_train, propensity_train, score_all, HeckmanOptions, RankingModel, Stage2};
use crate::seeding::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Naive,
    Propensity,
    Heckman,
    CombinedW,
    RankAgg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Naive,
        Algorithm::Propensity,
        Algorithm::Heckman,
        Algorithm::CombinedW,
        Algorithm::RankAgg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Naive => "naive",
            Algorithm::Propensity => "propensity",
            Algorithm::Heckman => "heckman",
            Algorithm::CombinedW => "combinedw",
            Algorithm::RankAgg => "rankagg",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated per run seed unless `data_seed` pins it.
    Synthetic(SyntheticSpec),
    /// LETOR file(s). Without a test file the train file is split by query.
    Letor { train: PathBuf, test: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub data_seed: Option<u64>,
    pub relevance_threshold: u8,
    pub train_fraction: f64,
    pub base_ranker_fraction: f64,
    pub eta_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub noise_values: Vec<f64>,
    pub passes: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub ndcg_p: usize,
    /// Bias assumed by the propensity ranker; `None` uses the simulator's η.
    pub assumed_eta: Option<f64>,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub heckman_stage2: Stage2,
    pub arrr_denominator: ArrrDenominator,
    /// Record wall time per row; when off the column is written as 0.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            data_seed: None,
            relevance_threshold: crate::dataset::DEFAULT_RELEVANCE_THRESHOLD,
            train_fraction: 0.7,
            base_ranker_fraction: DEFAULT_BASE_FRACTION,
            eta_values: vec![1.0],
            k_values: vec![10],
            noise_values: vec![0.0],
            passes: DEFAULT_PASSES,
            seeds: vec![1],
            algorithms: Algorithm::ALL.to_vec(),
            ndcg_p: DEFAULT_NDCG_P,
            assumed_eta: None,
            svm_c: 1.0,
            svm_epochs: 10,
            heckman_stage2: Stage2::Linear,
            arrr_denominator: ArrrDenominator::QueriesWithRelevant,
            timing: true,
        }
    }
}

fn config_err(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value for {key}: {value:?}"))
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| config_err(key, value))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| config_err(key, value)))
        .collect()
}

/// Integer list with inclusive `a..b` ranges, e.g. `1..5,10`.
fn parse_int_list<T: FromStr + TryFrom<u64>>(key: &str, value: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = parse_scalar(key, a)?;
            let b: u64 = parse_scalar(key, b)?;
            if a > b {
                return Err(config_err(key, value));
            }
            for v in a..=b {
                out.push(T::try_from(v).map_err(|_| config_err(key, value))?);
            }
        } else {
            out.push(parse_scalar(key, item)?);
        }
    }
    Ok(out)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(key, value)),
    }
}

impl ExperimentConfig {
    /// Parses a flat `key=value` config on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::default();
        for key in kv.keys() {
            cfg.set(key, kv.get(key).unwrap_or_default())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    fn synthetic_mut(&mut self) -> &mut SyntheticSpec {
        if !matches!(self.data, DataSource::Synthetic(_)) {
            self.data = DataSource::Synthetic(SyntheticSpec::default());
        }
        match &mut self.data {
            DataSource::Synthetic(s) => s,
            DataSource::Letor { .. } => unreachable!(),
        }
    }

    /// Applies one `key=value` setting. Used for file keys and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => {
                if v == "synthetic" {
                    self.synthetic_mut();
                } else {
                    let test = match &self.data {
                        DataSource::Letor { test, .. } => test.clone(),
                        DataSource::Synthetic(_) => None,
                    };
                    self.data = DataSource::Letor {
                        train: PathBuf::from(v),
                        test,
                    };
                }
            }
            "test_data" => match &mut self.data {
                DataSource::Letor { test, .. } => *test = Some(PathBuf::from(v)),
                DataSource::Synthetic(_) => {
                    return Err(Error::Config("test_data requires a data file set first".into()))
                }
            },
            "synthetic_queries" => self.synthetic_mut().n_queries = parse_scalar(key, v)?,
            "synthetic_docs" => self.synthetic_mut().docs_per_query = parse_scalar(key, v)?,
            "synthetic_features" => self.synthetic_mut().feature_dim = parse_scalar(key, v)?,
            "synthetic_relevant_fraction" => self.synthetic_mut().relevant_fraction = parse_scalar(key, v)?,
            "synthetic_score_noise" => self.synthetic_mut().score_noise = parse_scalar(key, v)?,
            "data_seed" => self.data_seed = Some(parse_scalar(key, v)?),
            "relevance_threshold" => self.relevance_threshold = parse_scalar(key, v)?,
            "train_fraction" => self.train_fraction = parse_scalar(key, v)?,
            "base_ranker_fraction" => self.base_ranker_fraction = parse_scalar(key, v)?,
            "eta" => self.eta_values = parse_list(key, v)?,
            "k" => self.k_values = parse_int_list(key, v)?,
            "noise" => self.noise_values = parse_list(key, v)?,
            "passes" => self.passes = parse_scalar(key, v)?,
            "seeds" | "seed" => self.seeds = parse_int_list(key, v)?,
            "algorithms" => self.algorithms = parse_list(key, v)?,
            "ndcg_p" => self.ndcg_p = parse_scalar(key, v)?,
            "assumed_eta" => {
                self.assumed_eta = if v == "true" || v == "auto" {
                    None
                } else {
                    Some(parse_scalar(key, v)?)
                }
            }
            "svm_c" => self.svm_c = parse_scalar(key, v)?,
            "svm_epochs" => self.svm_epochs = parse_scalar(key, v)?,
            "heckman_stage2" => self.heckman_stage2 = v.parse().map_err(|_| config_err(key, v))?,
            "arrr_denominator" => {
                self.arrr_denominator = match v {
                    "relevant" => ArrrDenominator::QueriesWithRelevant,
                    "all" => ArrrDenominator::AllQueries,
                    _ => return Err(config_err(key, v)),
                }
            }
            "timing" => self.timing = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.eta_values.is_empty() || self.k_values.is_empty() || self.noise_values.is_empty() {
            return fail("eta, k and noise lists must be nonempty");
        }
        if self.seeds.is_empty() || self.algorithms.is_empty() {
            return fail("seeds and algorithms must be nonempty");
        }
        if self.k_values.contains(&0) {
            return fail("k values must be positive");
        }
        if self.eta_values.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return fail("eta values must be >= 0");
        }
        if self.noise_values.iter().any(|n| !(0.0..1.0).contains(n)) {
            return fail("noise values must lie in [0,1)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train_fraction must lie in (0,1)");
        }
        if !(self.base_ranker_fraction > 0.0 && self.base_ranker_fraction < 1.0) {
            return fail("base_ranker_fraction must lie in (0,1)");
        }
        if self.passes == 0 || self.ndcg_p == 0 || self.svm_epochs == 0 {
            return fail("passes, ndcg_p and svm_epochs must be positive");
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return fail("svm_c must be positive");
        }
        if let Some(e) = self.assumed_eta {
            if !(e >= 0.0 && e.is_finite()) {
                return fail("assumed_eta must be >= 0");
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.n_queries < 2 || s.docs_per_query == 0 || s.feature_dim == 0 {
                return fail("synthetic dimensions too small");
            }
            if !(s.relevant_fraction > 0.0 && s.relevant_fraction < 1.0) {
                return fail("synthetic_relevant_fraction must lie in (0,1)");
            }
        }
        Ok(())
    }

    fn hinge(&self, seed: Seed, label: &str) -> HingeOptions {
        HingeOptions {
            c: self.svm_c,
            epochs: self.svm_epochs,
            seed: seed.with_str(label).rng_u64(),
        }
    }
}

/// Train/test data, base rankings of the training queries and the base ranker,
/// shared by every cell of one seed.
#[derive(Debug, Clone)]
pub struct PreparedSeed {
    pub seed: u64,
    /// Training queries not used by the base ranker.
    pub train: Dataset,
    pub test: Dataset,
    pub base_rankings: Rankings,
}

/// Loads or generates data for `seed`, splits it and fits the base ranker.
pub fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<PreparedSeed> {
    let root = Seed::new(seed);
    let (train, test) = match &config.data {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: config.data_seed.unwrap_or(seed),
                ..spec.clone()
            };
            let ds = binarize_relevance(generate_synthetic(&spec)?, config.relevance_threshold);
            split_by_query(&ds, config.train_fraction, root.with_str("split").rng_u64())?
        }
        DataSource::Letor { train, test } => {
            let ds = binarize_relevance(read_letor(train)?, config.relevance_threshold);
            match test {
                Some(t) => (ds, binarize_relevance(read_letor(t)?, config.relevance_threshold)),
                None => split_by_query(&ds, config.train_fraction, root.with_str("split").rng_u64())?,
            }
        }
    };
    let base = train_base_ranker(
        &train,
        config.base_ranker_fraction,
        root.with_str("base").rng_u64(),
        &config.hinge(root, "base-hinge"),
    )?;
    let rest = base.remaining(&train);
    if rest.queries.is_empty() {
        return Err(Error::InvalidArgument(
            "no training queries left after the base sample".into(),
        ));
    }
    let base_rankings = produce_rankings(&base.model, &rest)?;
    Ok(PreparedSeed {
        seed,
        train: rest,
        test,
        base_rankings,
    })
}

/// Outcome of one algorithm in one cell.
#[derive(Debug)]
pub struct AlgorithmOutcome {
    pub algorithm: Algorithm,
    pub result: Result<EvalResult>,
    pub wall_time_ms: f64,
    pub warnings: Vec<String>,
}

/// Everything one cell trains, kept for inspection by callers and tests.
#[derive(Debug, Default)]
pub struct CellArtifacts {
    pub log: Option<ClickLog>,
    pub naive: Option<RankingModel>,
    pub propensity: Option<RankingModel>,
    pub heckman: Option<RankingModel>,
    pub combinedw: Option<EnsembleModel>,
    /// Test-set rankings per algorithm.
    pub test_rankings: Vec<(Algorithm, Rankings)>,
}

fn cell_error(eta: f64, k: usize, noise: f64, seed: u64, e: Error) -> Error {
    Error::Cell {
        eta,
        k,
        noise,
        seed,
        source: Box::new(e),
    }
}

fn cell_seed(seed: u64) -> Seed {
    Seed::new(seed).with_str("cell")
}

/// Runs one grid cell on prepared data. Failures are isolated per algorithm;
/// ensembles fail if one of their components failed.
pub fn run_prepared_cell(
    config: &ExperimentConfig,
    prepared: &PreparedSeed,
    eta: f64,
    k: usize,
    noise: f64,
) -> (Vec<AlgorithmOutcome>, CellArtifacts) {
    let seed = prepared.seed;
    let annotate = |e: Error| cell_error(eta, k, noise, seed, e);
    let root = cell_seed(seed);
    let mut artifacts = CellArtifacts::default();

    // Clicks share one stream per seed across (η, k, noise), so cells of a
    // seed are paired comparisons.
    let params = ClickParams {
        eta,
        k,
        noise,
        passes: config.passes,
        seed: root.with_str("clicks").rng_u64(),
    };
    let log = match simulate_clicks(&prepared.base_rankings, &prepared.train, &params) {
        Ok(log) => log,
        Err(e) => {
            let msg = e.to_string();
            let outcomes = config
                .algorithms
                .iter()
                .map(|&a| AlgorithmOutcome {
                    algorithm: a,
                    result: Err(annotate(Error::InvalidArgument(format!(
                        "click simulation failed: {msg}"
                    )))),
                    wall_time_ms: 0.0,
                    warnings: Vec::new(),
                })
                .collect();
            return (outcomes, artifacts);
        }
    };

    let wants = |a: Algorithm| config.algorithms.contains(&a);
    let needs_components = wants(Algorithm::CombinedW) || wants(Algorithm::RankAgg);
    let judgments = Judgments::from_dataset(&prepared.test);
    let eval = |r: &Rankings| evaluate(r, &judgments, config.ndcg_p, config.arrr_denominator);

    type Trained = (Result<(RankingModel, Rankings)>, f64);
    let train_one = |f: &dyn Fn() -> Result<RankingModel>| -> Trained {
        let start = Instant::now();
        let out = f().and_then(|m| {
            let r = score_all(&m, &prepared.test)?;
            Ok((m, r))
        });
        (out, start.elapsed().as_secs_f64() * 1e3)
    };

    let assumed_eta = config.assumed_eta.unwrap_or(eta);
    let naive = wants(Algorithm::Naive)
        .then(|| train_one(&|| naive_train(&log, &prepared.train, &config.hinge(root, "naive"))));
    let propensity = (wants(Algorithm::Propensity) || needs_components).then(|| {
        train_one(&|| propensity_train(&log, &prepared.train, assumed_eta, &config.hinge(root, "propensity")))
    });
    let heckman_opts = HeckmanOptions {
        stage2: config.heckman_stage2,
        ..Default::default()
    };
    let heckman = (wants(Algorithm::Heckman) || needs_components)
        .then(|| train_one(&|| heckman_train(&log, &prepared.train, &heckman_opts)));

    let mut outcomes = Vec::new();
    let mut record = |algorithm: Algorithm, trained: &Trained, artifacts: &mut CellArtifacts| {
        let (res, ms) = trained;
        let (result, warnings) = match res {
            Ok((m, r)) => {
                artifacts.test_rankings.push((algorithm, r.clone()));
                (eval(r).map_err(annotate), m.stats.warnings.clone())
            }
            Err(e) => (Err(annotate(clone_error(e))), Vec::new()),
        };
        outcomes.push(AlgorithmOutcome {
            algorithm,
            result,
            wall_time_ms: *ms,
            warnings,
        });
    };
    if let Some(t) = &naive {
        record(Algorithm::Naive, t, &mut artifacts);
    }
    if wants(Algorithm::Propensity) {
        if let Some(t) = &propensity {
            record(Algorithm::Propensity, t, &mut artifacts);
        }
    }
    if wants(Algorithm::Heckman) {
        if let Some(t) = &heckman {
            record(Algorithm::Heckman, t, &mut artifacts);
        }
    }

    if needs_components {
        let components = match (&heckman, &propensity) {
            (Some((Ok((h, hr)), hms)), Some((Ok((p, pr)), pms))) => Ok((h, hr, p, pr, hms + pms)),
            (Some((Err(e), _)), _) | (_, Some((Err(e), _))) => Err(e),
            _ => unreachable!("components are trained whenever an ensemble is requested"),
        };
        for algorithm in [Algorithm::CombinedW, Algorithm::RankAgg] {
            if !wants(algorithm) {
                continue;
            }
            let start = Instant::now();
            let result = match &components {
                Err(e) => Err(Error::InvalidArgument(format!("ensemble component failed: {e}"))),
                Ok((h, hr, p, pr, _)) => {
                    let model = if algorithm == Algorithm::CombinedW {
                        score_all(h, &prepared.train).and_then(|hs| {
                            let ps = score_all(p, &prepared.train)?;
                            combinedw_train(&hs, &ps, &log)
                        })
                    } else {
                        Ok(EnsembleModel::RankAgg)
                    };
                    model.and_then(|m| {
                        let r = ensemble_rank_all(&m, hr, pr)?;
                        if let EnsembleModel::CombinedW { .. } = m {
                            artifacts.combinedw = Some(m);
                        }
                        let e = eval(&r);
                        artifacts.test_rankings.push((algorithm, r));
                        e
                    })
                }
            };
            let component_ms = components.as_ref().map_or(0.0, |c| c.4);
            outcomes.push(AlgorithmOutcome {
                algorithm,
                result: result.map_err(annotate),
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3 + component_ms,
                warnings: Vec::new(),
            });
        }
    }

    artifacts.naive = naive.and_then(|(r, _)| r.ok().map(|(m, _)| m));
    artifacts.propensity = propensity.and_then(|(r, _)| r.ok().map(|(m, _)| m));
    artifacts.heckman = heckman.and_then(|(r, _)| r.ok().map(|(m, _)| m));
    artifacts.log = Some(log);
    (outcomes, artifacts)
}

/// Errors are not `Clone`; re-create the variants the harness can surface.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::NoSelectionVariation => Error::NoSelectionVariation,
        Error::EmptyClickLog => Error::EmptyClickLog,
        Error::DegenerateLabels => Error::DegenerateLabels,
        Error::DegenerateSelectionLabels => Error::DegenerateSelectionLabels,
        Error::NoNoiseTargets => Error::NoNoiseTargets,
        other => Error::InvalidArgument(other.to_string()),
    }
}

/// Runs a single cell from scratch (prepares the seed first).
pub fn run_cell(config: &ExperimentConfig, eta: f64, k: usize, noise: f64, seed: u64) -> Result<Vec<AlgorithmOutcome>> {
    config.validate()?;
    let prepared = prepare_seed(config, seed).map_err(|e| cell_error(eta, k, noise, seed, e))?;
    Ok(run_prepared_cell(config, &prepared, eta, k, noise).0)
}

/// A trained algorithm as saved by the CLI: one ranker, or an ensemble with
/// its two components.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TrainedModel {
    Single(RankingModel),
    Ensemble {
        selection: RankingModel,
        position: RankingModel,
        ensemble: EnsembleModel,
    },
}

impl TrainedModel {
    pub fn to_kv(&self) -> KeyValues {
        match self {
            TrainedModel::Single(m) => m.to_kv(),
            TrainedModel::Ensemble {
                selection,
                position,
                ensemble,
            } => {
                let mut kv = KeyValues::new();
                kv.set("kind", "ensemble");
                kv.extend_prefixed("ensemble", &ensemble.to_kv());
                kv.extend_prefixed("selection", &selection.to_kv());
                kv.extend_prefixed("position", &position.to_kv());
                kv
            }
        }
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if kv.require("kind")? == "ensemble" {
            Ok(TrainedModel::Ensemble {
                selection: RankingModel::from_kv(&kv.section("selection"))?,
                position: RankingModel::from_kv(&kv.section("position"))?,
                ensemble: EnsembleModel::from_kv(&kv.section("ensemble"))?,
            })
        } else {
            Ok(TrainedModel::Single(RankingModel::from_kv(kv)?))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv().to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&KeyValues::parse(&text)?)
    }

    /// Rankings for every query of `ds`.
    pub fn rank_all(&self, ds: &Dataset) -> Result<Rankings> {
        match self {
            TrainedModel::Single(m) => score_all(m, ds),
            TrainedModel::Ensemble {
                selection,
                position,
                ensemble,
            } => ensemble_rank_all(ensemble, &score_all(selection, ds)?, &score_all(position, ds)?),
        }
    }
}

/// Trains one algorithm on a click log over `ds`, with the config's solver
/// settings. `eta` is the propensity ranker's assumed bias.
pub fn train_algorithm(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    log: &ClickLog,
    ds: &Dataset,
    eta: f64,
    seed: u64,
) -> Result<TrainedModel> {
    let root = cell_seed(seed);
    let heckman_opts = HeckmanOptions {
        stage2: config.heckman_stage2,
        ..Default::default()
    };
    let propensity = || propensity_train(log, ds, eta, &config.hinge(root, "propensity"));
    Ok(match algorithm {
        Algorithm::Naive => TrainedModel::Single(naive_train(log, ds, &config.hinge(root, "naive"))?),
        Algorithm::Propensity => TrainedModel::Single(propensity()?),
        Algorithm::Heckman => TrainedModel::Single(heckman_train(log, ds, &heckman_opts)?),
        Algorithm::CombinedW | Algorithm::RankAgg => {
            let selection = heckman_train(log, ds, &heckman_opts)?;
            let position = propensity()?;
            let ensemble = if algorithm == Algorithm::CombinedW {
                combinedw_train(&score_all(&selection, ds)?, &score_all(&position, ds)?, log)?
            } else {
                EnsembleModel::RankAgg
            };
            TrainedModel::Ensemble {
                selection,
                position,
                ensemble,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub k: usize,
    pub noise: f64,
    pub seed: u64,
    pub arrr: f64,
    pub ndcg: f64,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn key_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.algorithm
            .cmp(&other.algorithm)
            .then(self.eta.total_cmp(&other.eta))
            .then(self.k.cmp(&other.k))
            .then(self.noise.total_cmp(&other.noise))
            .then(self.seed.cmp(&other.seed))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn errors(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }
}

fn rows_from(
    outcomes: Vec<AlgorithmOutcome>,
    eta: f64,
    k: usize,
    noise: f64,
    seed: u64,
    timing: bool,
) -> Vec<SweepRow> {
    outcomes
        .into_iter()
        .map(|o| {
            let (arrr, ndcg, error) = match o.result {
                Ok(r) => (r.arrr, r.ndcg_at_p, None),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            SweepRow {
                algorithm: o.algorithm,
                eta,
                k,
                noise,
                seed,
                arrr,
                ndcg,
                wall_time_ms: if timing { o.wall_time_ms } else { 0.0 },
                error,
            }
        })
        .collect()
}

/// Runs the Cartesian product of `(η, k, noise, seed)`. Failures become rows
/// with NaN metrics and an error message; rows come back in key order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let prepared: Vec<(u64, std::result::Result<PreparedSeed, String>)> = config
        .seeds
        .par_iter()
        .map(|&s| (s, prepare_seed(config, s).map_err(|e| e.to_string())))
        .collect();

    let mut cells = Vec::new();
    for (seed, p) in &prepared {
        for &eta in &config.eta_values {
            for &k in &config.k_values {
                for &noise in &config.noise_values {
                    cells.push((*seed, p, eta, k, noise));
                }
            }
        }
    }

    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .flat_map_iter(|&(seed, prepared, eta, k, noise)| {
            let outcomes = match prepared {
                Ok(p) => run_prepared_cell(config, p, eta, k, noise).0,
                Err(msg) => config
                    .algorithms
                    .iter()
                    .map(|&a| AlgorithmOutcome {
                        algorithm: a,
                        result: Err(cell_error(eta, k, noise, seed, Error::InvalidArgument(msg.clone()))),
                        wall_time_ms: 0.0,
                        warnings: Vec::new(),
                    })
                    .collect(),
            };
            rows_from(outcomes, eta, k, noise, seed, config.timing)
        })
        .collect();
    rows.sort_by(SweepRow::key_cmp);
    Ok(SweepResult { rows })
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const SWEEP_HEADER: &str = "algorithm,eta,k,noise,seed,arrr,ndcg,wall_time_ms";

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.algorithm,
            format_sig6(r.eta),
            r.k,
            format_sig6(r.noise),
            r.seed,
            format_sig6(r.arrr),
            format_sig6(r.ndcg),
            format_sig6(r.wall_time_ms)
        );
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::InvalidArgument("empty sweep result".into()));
    }
    std::fs::write(path, sweep_csv(result)).map_err(|e| Error::io(path, e))
}

/// Reads a sweep CSV back (error rows come back with NaN metrics and no message).
pub fn parse_sweep_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {SWEEP_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return Err(err("expected 8 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("invalid number"));
        let arrr = num(f[5])?;
        rows.push(SweepRow {
            algorithm: f[0].parse().map_err(|_| err("unknown algorithm"))?,
            eta: num(f[1])?,
            k: f[2].parse().map_err(|_| err("invalid k"))?,
            noise: num(f[3])?,
            seed: f[4].parse().map_err(|_| err("invalid seed"))?,
            arrr,
            ndcg: num(f[6])?,
            wall_time_ms: num(f[7])?,
            error: arrr.is_nan().then(|| "error".to_string()),
        });
    }
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Arrr,
    Ndcg,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arrr" => Ok(Metric::Arrr),
            "ndcg" => Ok(Metric::Ndcg),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Arrr => "arrr",
            Metric::Ndcg => "ndcg",
        }
    }

    fn of(self, r: &SweepRow) -> f64 {
        match self {
            Metric::Arrr => r.arrr,
            Metric::Ndcg => r.ndcg,
        }
    }
}

/// Grid parameter used as the x axis of a plot series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    K,
    Eta,
    Noise,
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Axis::K),
            "eta" => Ok(Axis::Eta),
            "noise" => Ok(Axis::Noise),
            _ => Err(Error::Config(format!("unknown axis {s:?}"))),
        }
    }
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::Eta => "eta",
            Axis::Noise => "noise",
        }
    }

    fn of(self, r: &SweepRow) -> f64 {
        match self {
            Axis::K => r.k as f64,
            Axis::Eta => r.eta,
            Axis::Noise => r.noise,
        }
    }
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// One curve: an algorithm at fixed values of the two non-axis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algorithm: Algorithm,
    /// `(name, value)` of the fixed parameters.
    pub fixed: Vec<(&'static str, f64)>,
    pub points: Vec<SeriesPoint>,
}

/// Groups rows into per-algorithm curves over `axis`, averaging seeds. Failed
/// rows are left out of the statistics; a point where every seed failed is
/// kept with `n = 0` and NaN mean.
pub fn plot_series(result: &SweepResult, metric: Metric, axis: Axis) -> Vec<Series> {
    let fixed_axes: Vec<Axis> = [Axis::Eta, Axis::K, Axis::Noise]
        .into_iter()
        .filter(|a| *a != axis)
        .collect();
    let mut rows: Vec<&SweepRow> = result.rows.iter().collect();
    let key = |r: &SweepRow| {
        (
            r.algorithm,
            fixed_axes.iter().map(|a| a.of(r)).collect::<Vec<f64>>(),
            axis.of(r),
        )
    };
    rows.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(
                ka.1.iter()
                    .zip(&kb.1)
                    .fold(std::cmp::Ordering::Equal, |o, (x, y)| o.then(x.total_cmp(y))),
            )
            .then(ka.2.total_cmp(&kb.2))
    });

    let mut out: Vec<Series> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (alg, fixed, x) = key(rows[i]);
        let mut j = i;
        let mut values = Vec::new();
        while j < rows.len() && key(rows[j]) == (alg, fixed.clone(), x) {
            if rows[j].error.is_none() {
                values.push(metric.of(rows[j]));
            }
            j += 1;
        }
        let (mean, stderr) = mean_stderr(&values);
        let point = SeriesPoint {
            x,
            mean,
            stderr,
            n: values.len(),
        };
        let fixed_named: Vec<(&'static str, f64)> = fixed_axes.iter().map(|a| a.name()).zip(fixed).collect();
        match out.last_mut() {
            Some(s) if s.algorithm == alg && s.fixed == fixed_named => s.points.push(point),
            _ => out.push(Series {
                algorithm: alg,
                fixed: fixed_named,
                points: vec![point],
            }),
        }
        i = j;
    }
    out
}

/// Text blocks, one per series, separated by blank lines:
///
/// ```text
/// # algorithm=heckman eta=1 noise=0 metric=ndcg
/// k,mean,stderr,n
/// 1,0.61,0.012,5
/// ```
pub fn plot_series_text(result: &SweepResult, metric: Metric, axis: Axis) -> String {
    let mut out = String::new();
    for (i, s) in plot_series(result, metric, axis).iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "# algorithm={}", s.algorithm);
        for (name, v) in &s.fixed {
            let _ = write!(out, " {name}={}", format_sig6(*v));
        }
        let _ = writeln!(out, " metric={}", metric.name());
        let _ = writeln!(out, "{},mean,stderr,n", axis.name());
        for p in &s.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_sig6(p.x),
                format_sig6(p.mean),
                format_sig6(p.stderr),
                p.n
            );
        }
    }
    out
}

pub fn emit_plot_series(result: &SweepResult, metric: Metric, axis: Axis, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::InvalidArgument("empty sweep result".into()));
    }
    std::fs::write(path, plot_series_text(result, metric, axis)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(12.345678), "12.3457");
        assert_eq!(format_sig6(0.123456789), "0.123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.00001234567), "1.23457e-05");
        assert_eq!(format_sig6(-2.5), "-2.5");
        assert_eq!(format_sig6(f64::NAN), "NaN");
        assert_eq!(format_sig6(999999.5), "1e+06");
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_text(
            "# sweep\neta=0,0.5,1\nk=1..3,10\nnoise=0\nseeds=1..2\nalgorithms=naive,heckman\npasses=5\n",
        )
        .unwrap();
        assert_eq!(cfg.eta_values, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.k_values, vec![1, 2, 3, 10]);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Naive, Algorithm::Heckman]);
        assert_eq!(cfg.passes, 5);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::from_text("bogus=1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_text("k=0"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_text("noise=1.0"),
            Err(Error::Config(_))
        ));
        assert!(matches!(ExperimentConfig::from_text("eta="), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_text("algorithms=svm"),
            Err(Error::Config(_))
        ));
        assert!(matches!(ExperimentConfig::from_text("k=5..2"), Err(Error::Config(_))));
    }

    #[test]
    fn stderr_of_single_value_is_zero() {
        assert_eq!(mean_stderr(&[0.7]), (0.7, 0.0));
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    fn row(alg: Algorithm, k: usize, seed: u64, ndcg: f64) -> SweepRow {
        SweepRow {
            algorithm: alg,
            eta: 1.0,
            k,
            noise: 0.0,
            seed,
            arrr: 1.0,
            ndcg,
            wall_time_ms: 0.0,
            error: None,
        }
    }

    #[test]
    fn series_group_by_algorithm_and_axis() {
        let mut rows = Vec::new();
        for alg in [Algorithm::Naive, Algorithm::Heckman] {
            for k in 1..=30 {
                rows.push(row(alg, k, 1, 0.5));
            }
        }
        let result = SweepResult { rows };
        let series = plot_series(&result, Metric::Ndcg, Axis::K);
        assert_eq!(series.len(), 2);
        assert!(series.iter().all(|s| s.points.len() == 30));
        assert!(series[0].points.iter().all(|p| p.stderr == 0.0 && p.mean == 0.5));
        let text = plot_series_text(&result, Metric::Ndcg, Axis::K);
        assert_eq!(text.matches("# algorithm=").count(), 2);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let result = SweepResult {
            rows: vec![row(Algorithm::Naive, 3, 1, 0.25), row(Algorithm::RankAgg, 4, 2, 0.75)],
        };
        let text = sweep_csv(&result);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_sweep_csv(&text).unwrap(), result);
    }
}
