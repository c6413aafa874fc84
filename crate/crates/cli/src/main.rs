//! Pipeline driver: simgen → prescreen → loop → select → report, plus a
//! single `run` command chaining everything with staged, resumable
//! artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage
//! failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corpusloop::engine::{run_variant_loops, LoopConfig, QualityTable};
use corpusloop::manifest::{
    load_manifest, variant_path, write_manifest, Manifest, VariantId, VariantSet,
};
use corpusloop::metrics::{self, HqThreshold, Report};
use corpusloop::pipeline::{self, PipelineConfig};
use corpusloop::prescreen::PrescreenConfig;
use corpusloop::regressor::{RegressorConfig, RegressorKind};
use corpusloop::selection::{self, CorpusSelection, SelectionMethod};
use corpusloop::sim::{cleanse_manifest, generate_corpus, SimConfig, SimWorld};
use corpusloop::{Error, Result};

/// Environment variable overriding the `run` output directory.
const OUT_DIR_ENV: &str = "CORPUSLOOP_OUT_DIR";

#[derive(Parser)]
#[command(name = "corpusloop", version, about = "Evaluation-in-the-loop corpus construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated candidate corpus (plus cleansing-variant siblings).
    Simgen(SimgenArgs),
    /// Filter a manifest by alignment score and speaker compactness.
    Prescreen(PrescreenArgs),
    /// Run the train–evaluate–regress quality loop per variant.
    Loop(LoopArgs),
    /// Build a corpus selection from a quality table.
    Select(SelectArgs),
    /// Summarize speaker scores into a report.
    Report(ReportArgs),
    /// Run the full pipeline from a single config file.
    Run(RunArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct SimgenArgs {
    /// Simulator config JSON (defaults used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output manifest path; variant siblings land next to it.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated variant names.
    #[arg(long, value_delimiter = ',', default_value = "identity,denoise,restore")]
    variants: Vec<String>,
}

#[derive(Args)]
struct PrescreenArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CTC alignment threshold.
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    ctc: f64,
    /// Compactness band as "low:high".
    #[arg(long, default_value = "1:7")]
    compactness: String,
}

#[derive(Args)]
struct LoopArgs {
    /// Pre-screened pool manifest; variant siblings are loaded from
    /// `<stem>.<variant>.jsonl`.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "identity,denoise,restore")]
    variants: Vec<String>,
    /// Simulator config JSON (defaults used when omitted).
    #[arg(long)]
    sim: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Regressor kind: knn or ridge.
    #[arg(long, default_value = "knn")]
    regressor: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long)]
    no_standardize: bool,
    /// Run variant loops concurrently (results identical to sequential).
    #[arg(long)]
    parallel: bool,
    /// Serialize the identity-variant fitted regressor to this path.
    #[arg(long)]
    dump_regressor: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Quality table (needed by ours-utt / ours-spk).
    #[arg(long)]
    quality: Option<PathBuf>,
    /// Pre-screened pool manifest (needed by ours-spk, acoustic, unselected).
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Method: ours-utt, ours-spk, acoustic, unselected.
    #[arg(long)]
    method: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Variants registered for the run (acoustic switching reads their
    /// sibling manifests).
    #[arg(long, value_delimiter = ',', default_value = "identity,denoise,restore")]
    variants: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Speaker scores JSONL ({group_id, score, embedding}).
    #[arg(long)]
    scores: PathBuf,
    /// Reference speaker scores; their minimum becomes the HQ threshold.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Fixed HQ threshold (used when no reference is given).
    #[arg(long)]
    hq_threshold: Option<f64>,
    /// Histogram grid "start:stop:step".
    #[arg(long, default_value = "1.0:5.0:0.05")]
    grid: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the cumulative histogram as CSV (threshold,count).
    #[arg(long)]
    plot_csv: Option<PathBuf>,
    /// Optional measured stage times for the cost account, e.g. "1h26m27s".
    #[arg(long)]
    cost_train: Option<String>,
    #[arg(long)]
    cost_eval: Option<String>,
    #[arg(long)]
    cost_regress: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Skip stages whose artifacts already exist.
    #[arg(long)]
    resume: bool,
    /// Override the configured output directory (also: CORPUSLOOP_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simgen(args) => simgen(args),
        Command::Prescreen(args) => prescreen_cmd(args),
        Command::Loop(args) => loop_cmd(args),
        Command::Select(args) => select_cmd(args),
        Command::Report(args) => report_cmd(args),
        Command::Run(args) => run_cmd(args),
        Command::Version => {
            println!("corpusloop {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn load_sim_config(path: &Option<PathBuf>) -> Result<SimConfig> {
    let cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        None => SimConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simgen(args: SimgenArgs) -> Result<()> {
    let cfg = load_sim_config(&args.config)?;
    let variants = VariantSet::new(args.variants.iter())?;
    let corpus = generate_corpus(&cfg)?;
    write_manifest(&corpus, &args.out)?;
    for v in variants.iter() {
        if v.is_identity() {
            continue;
        }
        let cleansed = cleanse_manifest(&corpus, v, &cfg)?;
        write_manifest(&cleansed, &variant_path(&args.out, v))?;
    }
    println!(
        "wrote {} records ({} variants) to {}",
        corpus.len(),
        variants.len(),
        args.out.display()
    );
    Ok(())
}

fn parse_compactness(spec: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "compactness \"{spec}\" must be low:high"
        )));
    }
    let low: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad compactness bound \"{}\"", parts[0])))?;
    let high: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad compactness bound \"{}\"", parts[1])))?;
    Ok((low, high))
}

fn prescreen_cmd(args: PrescreenArgs) -> Result<()> {
    let (low, high) = parse_compactness(&args.compactness)?;
    let cfg = PrescreenConfig {
        ctc_threshold: args.ctc,
        compactness_low: low,
        compactness_high: high,
    };
    let pool = load_manifest(&args.input)?;
    let screened = corpusloop::prescreen::prescreen(&pool, &cfg)?;
    write_manifest(&screened, &args.out)?;
    println!(
        "kept {} of {} records ({} groups)",
        screened.len(),
        pool.len(),
        screened.group_ids().len()
    );
    Ok(())
}

fn loop_cmd(args: LoopArgs) -> Result<()> {
    let sim_cfg = load_sim_config(&args.sim)?;
    let world = SimWorld::new(sim_cfg);
    let variants = VariantSet::new(args.variants.iter())?;
    let kind = match args.regressor.as_str() {
        "knn" => RegressorKind::Knn,
        "ridge" => RegressorKind::Ridge,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown regressor \"{other}\" (knn or ridge)"
            )))
        }
    };
    let cfg = LoopConfig {
        sampling_fraction: args.fraction,
        regressor: RegressorConfig {
            kind,
            k: args.k,
            lambda: args.lambda,
            standardize: !args.no_standardize,
        },
        seed: args.seed,
        variants: args.variants.clone(),
        parallel: args.parallel,
    };
    cfg.validate()?;
    let pools: Vec<(VariantId, Manifest)> = variants
        .iter()
        .map(|v| {
            let m = load_manifest(&variant_path(&args.pool, v))?;
            Ok((v.clone(), m.with_variant(v.clone())))
        })
        .collect::<Result<_>>()?;
    let table = run_variant_loops(&pools, &world, &world, &cfg)?;
    table.save(&args.out)?;

    if let Some(dump) = &args.dump_regressor {
        // Refit the identity-variant regressor exactly as the loop did and
        // serialize its state.
        let identity_pool = &pools[0].1;
        let seed = corpusloop::engine::variant_seed(cfg.seed, &VariantId::identity());
        let indices =
            corpusloop::engine::sample_indices(identity_pool.len(), cfg.sampling_fraction, seed);
        let speakers = table
            .speaker_scores(&VariantId::identity())
            .ok_or_else(|| Error::Engine("missing identity speaker scores".into()))?;
        let chosen: std::collections::BTreeSet<usize> = indices.into_iter().collect();
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in identity_pool.records().iter().enumerate() {
            if chosen.contains(&i) {
                features.push(rec.features.clone());
                targets.push(speakers[&rec.group_id]);
            }
        }
        let fitted = corpusloop::regressor::fit(&features, &targets, &cfg.regressor)?;
        let json = serde_json::to_string_pretty(&fitted).expect("regressor serialization");
        std::fs::write(dump, json).map_err(|source| Error::Io {
            path: dump.clone(),
            source,
        })?;
    }

    println!(
        "scored {} utterances x {} variants into {}",
        table.len(),
        table.variants().len(),
        args.out.display()
    );
    Ok(())
}

fn select_cmd(args: SelectArgs) -> Result<()> {
    let need_pool = || {
        args.pool.clone().ok_or_else(|| {
            Error::InvalidConfig(format!("--pool is required for method {}", args.method))
        })
    };
    let need_quality = || {
        args.quality.clone().ok_or_else(|| {
            Error::InvalidConfig(format!("--quality is required for method {}", args.method))
        })
    };
    let need_n = || {
        args.n
            .ok_or_else(|| Error::InvalidConfig(format!("--n is required for method {}", args.method)))
    };
    let variants = VariantSet::new(args.variants.iter())?;
    let selection = match args.method.as_str() {
        "ours-utt" => {
            let table = QualityTable::load(&need_quality()?)?;
            let switched = selection::switch_variants(&table)?;
            selection::select_top_n(&switched, need_n()?, SelectionMethod::OursUtt)?
        }
        "ours-spk" => {
            let table = QualityTable::load(&need_quality()?)?;
            let pool = load_manifest(&need_pool()?)?;
            let speakers = table
                .speaker_scores(&VariantId::identity())
                .ok_or_else(|| Error::Selection("no identity speaker scores".into()))?;
            selection::select_speaker_wise(speakers, &pool, need_n()?)?
        }
        "acoustic" => {
            let base = need_pool()?;
            let pools: Vec<(VariantId, Manifest)> = variants
                .iter()
                .map(|v| {
                    let m = load_manifest(&variant_path(&base, v))?;
                    Ok((v.clone(), m.with_variant(v.clone())))
                })
                .collect::<Result<_>>()?;
            let switched = selection::acoustic_switch(&pools)?;
            match (args.theta, args.n) {
                (Some(theta), None) => {
                    let entries: Vec<(String, VariantId)> = switched
                        .iter()
                        .filter(|(_, sv)| sv.score > theta)
                        .map(|(id, sv)| (id.clone(), sv.variant.clone()))
                        .collect();
                    let n = entries.len();
                    CorpusSelection {
                        entries,
                        method: SelectionMethod::AcousticTheta,
                        n,
                        provenance: selection::Provenance {
                            theta: Some(theta),
                            ..Default::default()
                        },
                    }
                }
                (None, Some(n)) => {
                    selection::select_top_n(&switched, n, SelectionMethod::AcousticTheta)?
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "acoustic method needs exactly one of --theta and --n".into(),
                    ))
                }
            }
        }
        "unselected" => {
            let pool = load_manifest(&need_pool()?)?;
            CorpusSelection::unselected(&pool)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown method \"{other}\" (ours-utt, ours-spk, acoustic, unselected)"
            )))
        }
    };
    selection.validate(Some(&variants))?;
    selection.save(&args.out)?;
    println!(
        "selected {} utterances ({}) into {}",
        selection.len(),
        selection.method.as_str(),
        args.out.display()
    );
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let speakers = pipeline::load_speaker_scores(&args.scores)?;
    let score_map: BTreeMap<String, f64> = speakers
        .iter()
        .map(|s| (s.group_id.clone(), s.score))
        .collect();
    let embeddings: BTreeMap<String, Vec<f64>> = speakers
        .iter()
        .filter(|s| !s.embedding.is_empty())
        .map(|s| (s.group_id.clone(), s.embedding.clone()))
        .collect();
    let threshold = match (&args.reference, args.hq_threshold) {
        (Some(path), _) => metrics::hq_threshold(&pipeline::load_score_map(path)?)?,
        (None, Some(value)) => HqThreshold {
            value,
            source: "configured".into(),
        },
        (None, None) => HqThreshold {
            value: 4.0,
            source: "default".into(),
        },
    };
    let grid = metrics::parse_grid(&args.grid)?;
    let embeddings_opt = if embeddings.is_empty() {
        None
    } else {
        Some(&embeddings)
    };
    let mut report = Report::build(score_map, embeddings_opt, threshold, &grid)?;

    if let (Some(t), Some(e), Some(r)) = (&args.cost_train, &args.cost_eval, &args.cost_regress) {
        let train = corpusloop::engine::parse_duration(t)?;
        let eval = corpusloop::engine::parse_duration(e)?;
        let regress = corpusloop::engine::parse_duration(r)?;
        report.cost = Some(metrics::CostAccount::new(train, eval, regress));
    }

    std::fs::write(&args.out, report.to_canonical_json()).map_err(|source| Error::Io {
        path: args.out.clone(),
        source,
    })?;
    if let Some(csv_path) = &args.plot_csv {
        let mut csv = String::from("threshold,count\n");
        for point in &report.histogram {
            csv.push_str(&format!("{},{}\n", point.threshold, point.count));
        }
        std::fs::write(csv_path, csv).map_err(|source| Error::Io {
            path: csv_path.clone(),
            source,
        })?;
    }
    println!(
        "{} of {} speakers high-quality ({}), diversity cost {}",
        report.hq_count,
        report.total_speakers,
        report.hq_ratio,
        report
            .mst_cost
            .map(|w| format!("{w:.2}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(dir) = args.out_dir {
        cfg.out_dir = dir;
    } else if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        cfg.out_dir = PathBuf::from(dir);
    }
    let report = pipeline::run_pipeline(&cfg, args.resume)?;
    println!(
        "report: {} of {} speakers high-quality ({}), out dir {}",
        report.hq_count,
        report.total_speakers,
        report.hq_ratio,
        cfg.out_dir.display()
    );
    Ok(())
}
