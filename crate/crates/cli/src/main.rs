use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use synthdet_core::attacks::AttackSpec;
use synthdet_core::detector::TrainingMode;
use synthdet_core::pipeline::cache::FeatureCache;
use synthdet_core::pipeline::config::RunConfig;
use synthdet_core::pipeline::fixture::generate_fixture;
use synthdet_core::pipeline::manifest::{DatasetManifest, Split};
use synthdet_core::pipeline::run::{parse_attacks, Context};

/// Synthetic speech detector: features, training, attacks and evaluation.
#[derive(Parser)]
#[command(name = "synthdet", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON); defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for feature extraction.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Feature cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// MP3 encoder executable (LAME command line compatible).
    #[arg(long, global = true)]
    mp3_encoder: Option<PathBuf>,
    /// MP3 decoder executable.
    #[arg(long, global = true)]
    mp3_decoder: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the synthetic desk-scale dataset and its manifest.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tracks_per_cell: Option<usize>,
    },
    /// Extracts (and caches) features, printing a JSON summary.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        /// `noise:STD`, `mp3:KBPS` or `presets`.
        #[arg(long)]
        attack: Option<String>,
    },
    /// Trains the fused detector and baselines into `OUT/bundle`.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `a` (batch balanced) or `b` (sample weighted).
        #[arg(long)]
        mode: Option<TrainingMode>,
        /// Train on one dataset tag only.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Evaluates a bundle on clean and attacked audio.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "eval")]
        split: Split,
        /// Adds attacked conditions: `noise:STD`, `mp3:KBPS` or `presets`.
        #[arg(long)]
        attack: Vec<String>,
        /// Clean plus all five attack presets.
        #[arg(long)]
        sweep: bool,
        /// Scores one dataset tag only.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Writes the feature correlation matrix of one split.
    Correlate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classifies WAV files with a trained bundle.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn context(global: &Global, config: RunConfig) -> Result<Context> {
    if global.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let mut ctx = Context::new(config);
    ctx.jobs = global.jobs;
    ctx.cache = global.cache_dir.as_ref().map(FeatureCache::new);
    ctx.codec.encoder = global.mp3_encoder.clone();
    ctx.codec.decoder = global.mp3_decoder.clone();
    Ok(ctx)
}

fn manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::parse(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Command::Fixture { out, tracks_per_cell } => {
            if let Some(n) = tracks_per_cell {
                config.fixture.tracks_per_cell = n;
            }
            let m = generate_fixture(&out, &config.fixture, config.seed)?;
            println!("wrote {} tracks and {}", m.records.len(), out.join("manifest.csv").display());
        }
        Command::Extract { manifest: m, split, attack } => {
            let m = manifest(&m)?;
            let ctx = context(&cli.global, config)?;
            let attacks = match attack {
                Some(a) => parse_attacks(&a, ctx.config.seed)?.into_iter().map(Some).collect(),
                None => vec![None],
            };
            for attack in &attacks {
                let ex = ctx.extract(&m, split, attack.as_ref())?;
                let mut summary = serde_json::to_value(&ex.summary)?;
                summary["cache_hits"] = ex.summary.cache_hits.into();
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
        }
        Command::Train {
            manifest: m,
            out,
            mode,
            dataset,
            no_baselines,
        } => {
            if let Some(mode) = mode {
                config.mode = mode;
            }
            if dataset.is_some() {
                config.dataset = dataset;
            }
            config.baselines &= !no_baselines;
            let m = manifest(&m)?;
            let ctx = context(&cli.global, config)?;
            let outcome = ctx.train(&m, &out)?;
            let log = &outcome.logs.fused;
            println!(
                "fused: best epoch {} of {}, val loss {:.5}; bundle at {}",
                log.best_epoch,
                log.epochs.len(),
                log.best_val_loss,
                outcome.bundle_dir.display()
            );
        }
        Command::Eval {
            manifest: m,
            bundle,
            out,
            split,
            attack,
            sweep,
            dataset,
        } => {
            let mut m = manifest(&m)?;
            if let Some(tag) = &dataset {
                m = m.filter_dataset(tag)?;
            }
            let ctx = context(&cli.global, config)?;
            let mut conditions: Vec<Option<AttackSpec>> = vec![None];
            if sweep {
                conditions.extend(AttackSpec::presets(ctx.config.seed).into_iter().map(Some));
            }
            for a in &attack {
                conditions.extend(parse_attacks(a, ctx.config.seed)?.into_iter().map(Some));
            }
            let reports = ctx.evaluate(&m, &bundle, split, &conditions, &out)?;
            println!("{:<12} {:<9} {:>7} {:>7}", "condition", "model", "AUC", "BA");
            for r in reports {
                println!("{:<12} {:<9} {:>7.4} {:>7.4}", r.condition, r.model, r.auc, r.balanced_accuracy);
            }
        }
        Command::Correlate { manifest: m, split, out } => {
            let m = manifest(&m)?;
            let ctx = context(&cli.global, config)?;
            let c = ctx.correlate(&m, split, &out)?;
            for (a, ba) in c.blocks.iter().enumerate() {
                for (b, bb) in c.blocks.iter().enumerate().skip(a) {
                    println!("{}-{}: mean |r| {:.4}", ba.name, bb.name, c.block_mean_abs(a, b));
                }
            }
        }
        Command::Predict { bundle, files } => {
            let ctx = context(&cli.global, config)?;
            for p in ctx.predict(&bundle, &files)? {
                println!("{}\t{}\t{:.6}", p.path, p.label, p.p_fake);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
