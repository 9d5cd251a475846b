//! Command-line entry point: train experiment models, run fuzzing
//! campaigns and their unguided baselines, and report over the results.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use actfuzz::campaign::{
    run_to_dir, CampaignConfig, ChooserChoice, CoverageChoice, ExperimentKind, LayerChoice,
    SearchMode,
};
use actfuzz::experiments::{
    build_nan_assets, build_quant_assets, build_text_assets, build_text_assets_from_corpus,
    DEFAULT_BLACKLIST,
};
use actfuzz::formats::{read_blacklist, read_checkpoint, read_seeds, write_json, write_seeds};
use actfuzz::report::{merged_trace_csv, render_text, report_campaign};

#[derive(Parser)]
#[command(
    name = "actfuzz",
    version,
    about = "Coverage-guided fuzzing for numerical programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an experiment model and write its checkpoint.
    Train(TrainArgs),
    /// Run a coverage-guided fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Run the unguided random-search control (fuzz with --mode random).
    Baseline(FuzzArgs),
    /// Summarize one campaign directory or a root of run-* repeats.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Nan,
    Quant,
    Text,
}

impl From<ExperimentArg> for ExperimentKind {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Nan => ExperimentKind::Nan,
            ExperimentArg::Quant => ExperimentKind::Quant,
            ExperimentArg::Text => ExperimentKind::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Coverage,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChooserArg {
    Recency,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoverageModeArg {
    Exact,
    Approximate,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayerArg {
    Logits,
    Penultimate,
    RnnHidden,
}

#[derive(Args)]
struct TrainArgs {
    /// Which experiment model to build.
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    /// Where to write the checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Seed for dataset generation and training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training text for the text experiment (default: a bundled
    /// synthetic corpus derived from --seed).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Also write the experiment's fuzzing seeds to this directory.
    #[arg(long)]
    seeds_out: Option<PathBuf>,
    /// Also write the training corpus here (text experiment only).
    #[arg(long)]
    corpus_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// Model checkpoint to fuzz.
    #[arg(long)]
    model: PathBuf,
    /// Directory of seed inputs.
    #[arg(long)]
    seeds: PathBuf,
    /// Campaign directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Experiment kind (default: whatever the checkpoint was trained for).
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,
    /// Guided fuzzing or the random-search control.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Mutation iterations.
    #[arg(long)]
    iterations: Option<u64>,
    /// Mutants per iteration.
    #[arg(long)]
    batch: Option<usize>,
    /// Parent selection policy.
    #[arg(long, value_enum)]
    chooser: Option<ChooserArg>,
    /// Stop at the first surfaced test case.
    #[arg(long)]
    stop_on_first: bool,
    /// Mutate one parent per iteration instead of one per mutant.
    #[arg(long)]
    single_parent_batch: bool,
    /// Seed for all campaign randomness.
    #[arg(long, default_value_t = 0)]
    campaign_seed: u64,
    /// Novelty threshold (default: calibrated from the seed coverage).
    #[arg(long)]
    threshold: Option<f64>,
    /// Exact or approximate nearest-neighbor coverage.
    #[arg(long, value_enum)]
    coverage_mode: Option<CoverageModeArg>,
    /// Which activations form the coverage vector.
    #[arg(long, value_enum)]
    coverage_layer: Option<LayerArg>,
    /// Rescale coverage dimensions to unit seed variance.
    #[arg(long)]
    standardize: bool,
    /// Mutation noise for image inputs.
    #[arg(long)]
    sigma: Option<f32>,
    /// Per-pixel distance bound to the seed ancestor (image inputs).
    #[arg(long)]
    radius: Option<f64>,
    /// Keep intermediate activations in half precision too (quant).
    #[arg(long)]
    truncate_activations: Option<bool>,
    /// Characters sampled per evaluation (text).
    #[arg(long)]
    sample_length: Option<usize>,
    /// Sampler seed, re-applied every evaluation (text).
    #[arg(long)]
    sample_seed: Option<u64>,
    /// Blacklist file, one forbidden word per line (text; default: the
    /// bundled list).
    #[arg(long)]
    blacklist: Option<PathBuf>,
    /// Highest allowed consecutive repetition of one word (text).
    #[arg(long)]
    max_repeats: Option<usize>,
    /// Run this many independent campaigns into run-NNN subdirectories,
    /// with seeds campaign_seed, campaign_seed+1, ...
    #[arg(long)]
    repeat: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign directory, or a root containing run-* repeats.
    #[arg(long)]
    campaign: PathBuf,
    /// Re-evaluate every surfaced test case against the stored model.
    #[arg(long)]
    recheck: bool,
    /// Emit the report as JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Also write the merged per-run trace CSV here.
    #[arg(long)]
    merged_trace: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Fuzz(args) => cmd_fuzz(args, false),
        Cmd::Baseline(args) => cmd_fuzz(args, true),
        Cmd::Report(args) => cmd_report(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (checkpoint, seeds) = match args.experiment {
        ExperimentArg::Nan => {
            let assets = build_nan_assets(args.seed)?;
            (assets.checkpoint, assets.seeds)
        }
        ExperimentArg::Quant => {
            let assets = build_quant_assets(args.seed)?;
            (assets.checkpoint, assets.seeds)
        }
        ExperimentArg::Text => {
            let assets = match &args.corpus {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    build_text_assets_from_corpus(&text, args.seed)?
                }
                None => build_text_assets(args.seed)?,
            };
            if let Some(path) = &args.corpus_out {
                fs::write(path, &assets.corpus)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            (assets.checkpoint, assets.seeds)
        }
    };

    write_json(&args.out, &checkpoint)?;
    println!("wrote checkpoint {}", args.out.display());
    let t = &checkpoint.train;
    if let (Some(train), Some(test)) = (t.train_accuracy, t.test_accuracy) {
        println!("accuracy: train {train:.4}, held-out {test:.4}");
    }
    if let Some(loss) = &t.loss {
        println!("loss: {loss}");
    }
    if let Some(dir) = &args.seeds_out {
        write_seeds(dir, &seeds)?;
        println!("wrote {} seeds to {}", seeds.len(), dir.display());
    }
    Ok(())
}

fn cmd_fuzz(args: FuzzArgs, force_random: bool) -> Result<()> {
    let ckpt = read_checkpoint(&args.model)?;
    let experiment = match args.experiment {
        Some(e) => e.into(),
        None => ExperimentKind::parse(&ckpt.experiment)
            .context("checkpoint names no known experiment; pass --experiment")?,
    };

    let mut cfg = CampaignConfig::defaults(experiment);
    if let Some(mode) = args.mode {
        cfg.mode = match mode {
            ModeArg::Coverage => SearchMode::Coverage,
            ModeArg::Random => SearchMode::Random,
        };
    }
    if force_random {
        cfg.mode = SearchMode::Random;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(b) = args.batch {
        cfg.batch = b;
    }
    if let Some(c) = args.chooser {
        cfg.chooser = match c {
            ChooserArg::Recency => ChooserChoice::Recency,
            ChooserArg::Uniform => ChooserChoice::Uniform,
        };
    }
    cfg.stop_on_first = args.stop_on_first;
    cfg.single_parent_batch = args.single_parent_batch;
    cfg.campaign_seed = args.campaign_seed;
    cfg.threshold = args.threshold;
    if let Some(m) = args.coverage_mode {
        cfg.coverage_mode = match m {
            CoverageModeArg::Exact => CoverageChoice::Exact,
            CoverageModeArg::Approximate => CoverageChoice::Approximate,
        };
    }
    if let Some(l) = args.coverage_layer {
        cfg.coverage_layer = match l {
            LayerArg::Logits => LayerChoice::Logits,
            LayerArg::Penultimate => LayerChoice::Penultimate,
            LayerArg::RnnHidden => LayerChoice::RnnHidden,
        };
    }
    cfg.standardize = args.standardize;
    if args.sigma.is_some() {
        cfg.sigma = args.sigma;
    }
    if args.radius.is_some() {
        cfg.radius = args.radius;
    }
    if let Some(t) = args.truncate_activations {
        cfg.truncate_activations = t;
    }
    if args.sample_length.is_some() {
        cfg.sample_length = args.sample_length;
    }
    if args.sample_seed.is_some() {
        cfg.sample_seed = args.sample_seed;
    }
    cfg.blacklist = match &args.blacklist {
        Some(path) => read_blacklist(path)?,
        None if experiment == ExperimentKind::Text => {
            DEFAULT_BLACKLIST.iter().map(|s| s.to_string()).collect()
        }
        None => Vec::new(),
    };
    if let Some(m) = args.max_repeats {
        cfg.max_repeats = m;
    }
    cfg.validate()?;

    let seeds = read_seeds(&args.seeds)?;
    match args.repeat {
        None => {
            let artifacts = run_to_dir(&args.out, &ckpt, &seeds, &cfg)?;
            println!(
                "{}: corpus {} (from {} seeds), {} test cases, threshold {:.6}",
                args.out.display(),
                artifacts.outcome.corpus.len(),
                seeds.len(),
                artifacts.outcome.test_cases.len(),
                artifacts.threshold,
            );
        }
        Some(k) => {
            for run in 0..k {
                let mut run_cfg = cfg.clone();
                run_cfg.campaign_seed = cfg.campaign_seed.wrapping_add(run);
                let dir = args.out.join(format!("run-{run:03}"));
                let artifacts = run_to_dir(&dir, &ckpt, &seeds, &run_cfg)?;
                println!(
                    "{}: corpus {}, {} test cases",
                    dir.display(),
                    artifacts.outcome.corpus.len(),
                    artifacts.outcome.test_cases.len(),
                );
            }
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = report_campaign(&args.campaign, args.recheck)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", render_text(&report));
    }
    if let Some(path) = &args.merged_trace {
        fs::write(path, merged_trace_csv(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote merged trace {}", path.display());
    }
    Ok(())
}
