use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use heckrank::clicksim::{produce_rankings, simulate_clicks, train_base_ranker, ClickLog, ClickParams};
use heckrank::dataset::{binarize_relevance, generate_synthetic, read_letor, serialize_meta, write_letor, Dataset};
use heckrank::estimators::HingeOptions;
use heckrank::harness::{
    emit_csv, emit_plot_series, parse_sweep_csv, plot_series_text, run_sweep, sweep_csv, train_algorithm, Algorithm,
    Axis, DataSource, ExperimentConfig, Metric, TrainedModel,
};
use heckrank::metrics::{evaluate, Judgments};
use heckrank::Error;

#[derive(Parser)]
#[command(name = "heckrank", version, about = "Selection-bias-corrected learning to rank")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed (for `sweep`, replaces the configured seed list)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic LETOR dataset plus a `.meta` sidecar
    GenData {
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        relevant_fraction: Option<f64>,
    },
    /// Fit a base ranker on a sample of queries and simulate clicks on the rest
    Simulate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Train one algorithm on a click log
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clicks: PathBuf,
        #[arg(long)]
        algorithm: String,
        /// Assumed position bias for the propensity ranker (default: the log's η)
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Evaluate a saved model against labelled data
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the configured grid and write the results CSV
    Sweep {
        /// Extra `key=value` settings applied after the config file
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Turn a sweep CSV into per-algorithm series (mean ± standard error)
    PlotData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "ndcg")]
        metric: String,
        #[arg(long, default_value = "k")]
        x: String,
    },
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    Ok(match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    })
}

fn set_opt<T: ToString>(cfg: &mut ExperimentConfig, key: &str, value: &Option<T>) -> heckrank::Result<()> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn require_out(common: &Common) -> anyhow::Result<&Path> {
    match &common.out {
        Some(p) => Ok(p),
        None => Err(Error::Config("--out is required".into()).into()),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_data(path: &Path, cfg: &ExperimentConfig) -> anyhow::Result<Dataset> {
    Ok(binarize_relevance(read_letor(path)?, cfg.relevance_threshold))
}

fn hinge(cfg: &ExperimentConfig, seed: u64) -> HingeOptions {
    HingeOptions {
        c: cfg.svm_c,
        epochs: cfg.svm_epochs,
        seed,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.seeds[0]);

    match &cli.command {
        Command::GenData {
            queries,
            docs,
            features,
            relevant_fraction,
        } => {
            set_opt(&mut cfg, "synthetic_queries", queries)?;
            set_opt(&mut cfg, "synthetic_docs", docs)?;
            set_opt(&mut cfg, "synthetic_features", features)?;
            set_opt(&mut cfg, "synthetic_relevant_fraction", relevant_fraction)?;
            cfg.validate()?;
            let DataSource::Synthetic(mut spec) = cfg.data.clone() else {
                bail!(Error::Config("gen-data needs a synthetic data source".into()));
            };
            spec.seed = common.seed.or(cfg.data_seed).unwrap_or(seed);
            let out = require_out(common)?;
            let ds = generate_synthetic(&spec)?;
            write_letor(&ds, out)?;
            if let Some(meta) = &ds.meta {
                let meta_path = PathBuf::from(format!("{}.meta", out.display()));
                std::fs::write(&meta_path, serialize_meta(meta))
                    .with_context(|| format!("writing {}", meta_path.display()))?;
            }
            eprintln!(
                "wrote {} queries, {} documents to {}",
                ds.queries.len(),
                ds.num_documents(),
                out.display()
            );
        }

        Command::Simulate {
            data,
            eta,
            k,
            noise,
            passes,
        } => {
            set_opt(&mut cfg, "eta", eta)?;
            set_opt(&mut cfg, "k", k)?;
            set_opt(&mut cfg, "noise", noise)?;
            set_opt(&mut cfg, "passes", passes)?;
            if let Some(d) = data {
                cfg.set("data", &d.display().to_string())?;
            }
            cfg.validate()?;
            let ds = match &cfg.data {
                DataSource::Letor { train, .. } => load_data(train, &cfg)?,
                DataSource::Synthetic(spec) => {
                    let spec = heckrank::dataset::SyntheticSpec {
                        seed: cfg.data_seed.unwrap_or(seed),
                        ..spec.clone()
                    };
                    binarize_relevance(generate_synthetic(&spec)?, cfg.relevance_threshold)
                }
            };
            let base = train_base_ranker(&ds, cfg.base_ranker_fraction, seed, &hinge(&cfg, seed))?;
            let rest = base.remaining(&ds);
            let rankings = produce_rankings(&base.model, &rest)?;
            let params = ClickParams {
                eta: cfg.eta_values[0],
                k: cfg.k_values[0],
                noise: cfg.noise_values[0],
                passes: cfg.passes,
                seed,
            };
            let log = simulate_clicks(&rankings, &rest, &params)?;
            write_or_print(common.out.as_deref(), &log.to_csv())?;
            eprintln!(
                "base ranker used {} queries; {} records, {} clicks",
                base.sampled_queries.len(),
                log.records.len(),
                log.total_clicks()
            );
        }

        Command::Train {
            data,
            clicks,
            algorithm,
            eta,
        } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let out = require_out(common)?;
            let log = ClickLog::read_csv(clicks)?;
            let ds = load_data(data, &cfg)?;
            let in_log: std::collections::HashSet<&str> = log.records.iter().map(|r| r.query_id.as_str()).collect();
            let ds = ds.filter_queries(|q| in_log.contains(q));
            let assumed = eta.or(cfg.assumed_eta).unwrap_or(log.params.eta);
            let model = train_algorithm(&cfg, algorithm, &log, &ds, assumed, seed)?;
            if let TrainedModel::Single(m) = &model {
                for w in &m.stats.warnings {
                    eprintln!("warning: {w}");
                }
            }
            model.save(out)?;
        }

        Command::Eval { model, data } => {
            let model = TrainedModel::load(model)?;
            let ds = load_data(data, &cfg)?;
            let rankings = model.rank_all(&ds)?;
            let r = evaluate(
                &rankings,
                &Judgments::from_dataset(&ds),
                cfg.ndcg_p,
                cfg.arrr_denominator,
            )?;
            let text = format!(
                "arrr={}\nndcg@{}={}\nqueries={}\nskipped={}\n",
                r.arrr, r.p, r.ndcg_at_p, r.n_queries, r.n_skipped
            );
            write_or_print(common.out.as_deref(), &text)?;
        }

        Command::Sweep { set } => {
            for item in set {
                let Some((k, v)) = item.split_once('=') else {
                    bail!(Error::Config(format!("--set expects KEY=VALUE, got {item:?}")));
                };
                cfg.set(k.trim(), v)?;
            }
            if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            cfg.validate()?;
            let result = run_sweep(&cfg)?;
            for row in result.errors() {
                eprintln!(
                    "error: {}: {}",
                    row.algorithm,
                    row.error.as_deref().unwrap_or("unknown")
                );
            }
            match &common.out {
                Some(p) => emit_csv(&result, p)?,
                None => print!("{}", sweep_csv(&result)),
            }
        }

        Command::PlotData { input, metric, x } => {
            let metric: Metric = metric.parse()?;
            let axis: Axis = x.parse()?;
            let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let result = parse_sweep_csv(&text)?;
            match &common.out {
                Some(p) => emit_plot_series(&result, metric, axis, p)?,
                None => print!("{}", plot_series_text(&result, metric, axis)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e.root(), Error::Config(_)));
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}
