//! Campaign orchestration: configuration, harness assembly, and the
//! on-disk campaign directory.
//!
//! A campaign directory is self-contained and reproducible: it carries the
//! resolved configuration, a copy of the model checkpoint, the seed
//! inputs, the final corpus with lineage, every surfaced test case, and
//! the per-iteration trace. Re-running from the directory's own
//! `config.json` re-creates every artifact byte for byte; only
//! `meta.json` (wall-clock timestamps) differs between runs.
//!
//! Layout:
//!
//! ```text
//! campaign/
//!   config.json        resolved campaign configuration
//!   model.json         checkpoint copy
//!   meta.json          timestamps (excluded from reproducibility)
//!   seeds/             seed payloads, one file each
//!   corpus/            final corpus records, one file per id
//!   testcases/         surfaced test cases, one file each
//!   trace.csv          iteration,corpus_size,testcases
//!   outcome.json       headline numbers
//!   failed-input.json  written only when the model failed mid-campaign
//! ```

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use actfuzz_core::coverage::IndexParams;
use actfuzz_core::models::{CoverageLayer, ModelUnderTest};
use actfuzz_core::mutate::{ImageMutator, Mutator, TextMutator};
use actfuzz_core::objective::{NonFinite, Objective, QuantDisagreement, TextPolicy};
use actfuzz_core::{
    fuzz, random_search, ChooserMode, CoverageIndex, CoverageMode, EngineError, FuzzConfig,
    FuzzOutcome, MutationConfig, Payload, Vector,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::formats::{
    self, read_checkpoint, read_json, read_seeds, write_json, write_seeds, write_trace,
    Checkpoint, PayloadJson, RecordJson, TestCaseJson,
};

/// Format tag of `config.json`.
pub const CONFIG_FORMAT: &str = "actfuzz-campaign-config";
/// Format tag of `outcome.json`.
pub const OUTCOME_FORMAT: &str = "actfuzz-outcome";

/// Which bug hunt a campaign runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Hunt non-finite losses and logits in a classifier.
    Nan,
    /// Hunt decisions that flip under half-precision truncation.
    Quant,
    /// Hunt text-policy violations in a language model's samples.
    Text,
}

impl ExperimentKind {
    /// Stable lower-case name.
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Nan => "nan",
            ExperimentKind::Quant => "quant",
            ExperimentKind::Text => "text",
        }
    }

    /// Parses the stable name.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nan" => Ok(ExperimentKind::Nan),
            "quant" => Ok(ExperimentKind::Quant),
            "text" => Ok(ExperimentKind::Text),
            other => bail!("unknown experiment {other:?} (expected nan, quant, or text)"),
        }
    }
}

/// Guided fuzzing or the unguided control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Coverage-guided: novel mutants join the corpus.
    Coverage,
    /// Random search: parents come uniformly from the seeds, corpus fixed.
    Random,
}

/// Serializable mirror of the engine's chooser mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChooserChoice {
    /// Exponential recency weighting.
    Recency,
    /// Uniform over the corpus.
    Uniform,
}

impl From<ChooserChoice> for ChooserMode {
    fn from(c: ChooserChoice) -> ChooserMode {
        match c {
            ChooserChoice::Recency => ChooserMode::Recency,
            ChooserChoice::Uniform => ChooserMode::Uniform,
        }
    }
}

/// Serializable mirror of the coverage index mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageChoice {
    /// Exhaustive nearest-neighbor scans.
    Exact,
    /// Randomized-tree approximate scans.
    Approximate,
}

/// Serializable mirror of the classifier coverage layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerChoice {
    /// Coverage from the output logits.
    Logits,
    /// Coverage from the input to the final layer.
    Penultimate,
    /// Coverage from the recurrent hidden state (language models only).
    RnnHidden,
}

/// Everything needed to reproduce a campaign, and nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Always [`CONFIG_FORMAT`].
    pub format: String,
    /// Which hunt to run.
    pub experiment: ExperimentKind,
    /// Guided or control.
    pub mode: SearchMode,
    /// Mutation iterations.
    pub iterations: u64,
    /// Mutants per iteration.
    pub batch: usize,
    /// Parent selection policy.
    pub chooser: ChooserChoice,
    /// Stop at the first test case.
    pub stop_on_first: bool,
    /// One parent per iteration instead of one per mutant.
    pub single_parent_batch: bool,
    /// Seed for all campaign randomness.
    pub campaign_seed: u64,
    /// Novelty threshold; absent means calibrate from the seed coverage
    /// (5th percentile of pairwise distances).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
    /// Exact or approximate nearest-neighbor search.
    pub coverage_mode: CoverageChoice,
    /// Which activations form the coverage vector.
    pub coverage_layer: LayerChoice,
    /// Rescale coverage dimensions to unit seed variance before indexing.
    pub standardize: bool,
    /// Mutation noise for image inputs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f32>,
    /// Per-pixel distance bound to the seed ancestor, for image inputs.
    /// Must be positive when present.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius: Option<f64>,
    /// For the quant hunt: truncate activations between layers too, not
    /// just the stored weights.
    pub truncate_activations: bool,
    /// Characters sampled from the language model per evaluation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_length: Option<usize>,
    /// Seed for the language model's sampler (re-seeded every evaluation).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample_seed: Option<u64>,
    /// Forbidden words for the text policy.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub blacklist: Vec<String>,
    /// Highest allowed consecutive repetition of one word.
    pub max_repeats: usize,
}

impl CampaignConfig {
    /// A baseline configuration for an experiment kind; callers override
    /// fields as needed. Iteration counts are deliberately small — the
    /// real campaigns set their own.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = CampaignConfig {
            format: CONFIG_FORMAT.to_owned(),
            experiment,
            mode: SearchMode::Coverage,
            iterations: 1000,
            batch: 10,
            chooser: ChooserChoice::Recency,
            stop_on_first: false,
            single_parent_batch: false,
            campaign_seed: 0,
            threshold: None,
            coverage_mode: CoverageChoice::Approximate,
            coverage_layer: LayerChoice::Logits,
            standardize: false,
            sigma: None,
            radius: None,
            truncate_activations: true,
            sample_length: None,
            sample_seed: None,
            blacklist: Vec::new(),
            max_repeats: 2,
        };
        match experiment {
            ExperimentKind::Nan => {
                cfg.sigma = Some(crate::experiments::NAN_SIGMA);
            }
            ExperimentKind::Quant => {
                cfg.sigma = Some(crate::experiments::QUANT_SIGMA);
                cfg.radius = Some(crate::experiments::QUANT_RADIUS);
            }
            ExperimentKind::Text => {
                cfg.coverage_layer = LayerChoice::RnnHidden;
                cfg.sample_length = Some(crate::experiments::TEXT_SAMPLE_LENGTH);
                cfg.sample_seed = Some(1);
            }
        }
        cfg
    }

    /// Rejects inconsistent configurations before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT {
            bail!("not a campaign config (format tag {:?})", self.format);
        }
        if self.iterations == 0 || self.batch == 0 {
            bail!("iterations and batch must be at least 1");
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) || !r.is_finite() {
                bail!("the mutation ball radius must be positive and finite");
            }
        }
        if let Some(l) = self.threshold {
            if !(l >= 0.0) || !l.is_finite() {
                bail!("the novelty threshold must be non-negative and finite");
            }
        }
        match self.experiment {
            ExperimentKind::Nan | ExperimentKind::Quant => {
                let sigma = self.sigma.context("image experiments need a mutation sigma")?;
                if !(sigma > 0.0) || !sigma.is_finite() {
                    bail!("the mutation sigma must be positive and finite");
                }
                if self.coverage_layer == LayerChoice::RnnHidden {
                    bail!("classifiers have no recurrent hidden state to cover");
                }
            }
            ExperimentKind::Text => {
                if self.sample_length.is_none() || self.sample_seed.is_none() {
                    bail!("text experiments need a sample length and sample seed");
                }
                if self.max_repeats == 0 {
                    bail!("the repetition allowance must be at least 1");
                }
            }
        }
        Ok(())
    }

    fn engine_config(&self) -> FuzzConfig {
        FuzzConfig {
            iterations: self.iterations,
            batch: self.batch,
            chooser: self.chooser.into(),
            stop_on_first: self.stop_on_first,
            single_parent_batch: self.single_parent_batch,
        }
    }
}

/// The assembled model wrapper, mutator, and objective for a campaign.
pub struct Harness {
    /// The model under test.
    pub model: Box<dyn ModelUnderTest>,
    /// The input mutator.
    pub mutator: Box<dyn Mutator>,
    /// The bug predicate.
    pub objective: Box<dyn Objective>,
}

/// Builds the harness a configuration describes around a checkpoint.
pub fn build_harness(ckpt: &Checkpoint, cfg: &CampaignConfig) -> Result<Harness> {
    cfg.validate()?;
    let layer = match cfg.coverage_layer {
        LayerChoice::Logits => CoverageLayer::Logits,
        LayerChoice::Penultimate => CoverageLayer::Penultimate,
        LayerChoice::RnnHidden => CoverageLayer::HiddenState,
    };
    match cfg.experiment {
        ExperimentKind::Nan | ExperimentKind::Quant => {
            let model = ckpt.mlp().context("this experiment needs a classifier checkpoint")?;
            let mutation = MutationConfig {
                sigma: cfg.sigma.expect("validated above"),
                range: model.input_range,
                ball_radius: cfg.radius,
            };
            let mutator = ImageMutator::new(mutation)
                .map_err(|e| anyhow::anyhow!("bad mutation settings: {e}"))?;
            let (wrapper, objective): (_, Box<dyn Objective>) = match cfg.experiment {
                ExperimentKind::Nan => (
                    actfuzz_core::models::MlpUnderTest::nan_hunter(model, layer)
                        .map_err(|e| anyhow::anyhow!("bad wrapper settings: {e}"))?,
                    Box::new(NonFinite),
                ),
                _ => (
                    actfuzz_core::models::MlpUnderTest::quant_pair(
                        model,
                        layer,
                        cfg.truncate_activations,
                    )
                    .map_err(|e| anyhow::anyhow!("bad wrapper settings: {e}"))?,
                    Box::new(QuantDisagreement),
                ),
            };
            Ok(Harness {
                model: Box::new(wrapper),
                mutator: Box::new(mutator),
                objective,
            })
        }
        ExperimentKind::Text => {
            let model =
                ckpt.char_rnn().context("the text experiment needs a language-model checkpoint")?;
            let alphabet = model.vocab().chars().to_vec();
            let mutator = TextMutator::new(alphabet)
                .map_err(|e| anyhow::anyhow!("bad mutation settings: {e}"))?;
            let words: Vec<&str> = cfg.blacklist.iter().map(String::as_str).collect();
            let objective = TextPolicy::new(&words, cfg.max_repeats)
                .map_err(|e| anyhow::anyhow!("bad policy settings: {e}"))?;
            let wrapper = actfuzz_core::models::CharRnnUnderTest::new(
                model,
                cfg.sample_length.expect("validated above"),
                cfg.sample_seed.expect("validated above"),
            );
            Ok(Harness {
                model: Box::new(wrapper),
                mutator: Box::new(mutator),
                objective: Box::new(objective),
            })
        }
    }
}

/// What a finished run hands back, beyond the engine outcome.
pub struct RunArtifacts {
    /// Corpus, test cases, trace, and final index.
    pub outcome: FuzzOutcome,
    /// The novelty threshold actually used (explicit or calibrated).
    pub threshold: f64,
    /// Per-dimension coverage multipliers, when standardization was on.
    pub scale: Option<Vec<f32>>,
}

/// Per-dimension `1/stddev` multipliers from the seed coverage vectors;
/// degenerate dimensions (zero variance) keep scale 1.
fn standardization_scale(vectors: &[Vector]) -> Vec<f32> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let n = vectors.len() as f64;
    let mut scale = Vec::with_capacity(dim);
    for i in 0..dim {
        let mean: f64 = vectors.iter().map(|v| v[i] as f64).sum::<f64>() / n;
        let var: f64 =
            vectors.iter().map(|v| (v[i] as f64 - mean).powi(2)).sum::<f64>() / n;
        if var > 0.0 && var.is_finite() {
            scale.push((1.0 / var.sqrt()) as f32);
        } else {
            scale.push(1.0);
        }
    }
    scale
}

/// Runs a campaign in memory.
///
/// Evaluates the seeds once up front to calibrate the novelty threshold
/// (when none is given) and the standardization scale (when requested),
/// builds the index, and drives the engine. Failures evaluating a seed
/// are reported like any other input failure, at iteration 0.
pub fn run_in_memory(
    harness: &Harness,
    seeds: &[Payload],
    cfg: &CampaignConfig,
) -> Result<RunArtifacts, EngineError> {
    if seeds.is_empty() {
        return Err(EngineError::Setup(actfuzz_core::Error::EmptyCorpus));
    }
    let mut seed_coverage = Vec::with_capacity(seeds.len());
    for (payload, result) in seeds.iter().zip(harness.model.evaluate_batch(seeds)) {
        match result {
            Ok(eval) => seed_coverage.push(eval.coverage),
            Err(source) => {
                return Err(EngineError::InputFailure {
                    iteration: 0,
                    payload: payload.clone(),
                    source,
                })
            }
        }
    }

    let scale = cfg.standardize.then(|| standardization_scale(&seed_coverage));
    if let Some(s) = &scale {
        for v in &mut seed_coverage {
            for (x, &m) in v.as_mut_slice().iter_mut().zip(s) {
                *x *= m;
            }
        }
    }

    let threshold = match cfg.threshold {
        Some(l) => l,
        None => actfuzz_core::coverage::threshold_from_seed_coverage(&seed_coverage)
            .map_err(EngineError::Setup)?,
    };

    let mut index = match cfg.coverage_mode {
        CoverageChoice::Exact => CoverageIndex::exact(threshold),
        CoverageChoice::Approximate => CoverageIndex::approximate(
            threshold,
            IndexParams::default(),
            cfg.campaign_seed.wrapping_add(1),
        ),
    }
    .map_err(EngineError::Setup)?;
    debug_assert!(matches!(
        (cfg.coverage_mode, index.mode()),
        (CoverageChoice::Exact, CoverageMode::Exact)
            | (CoverageChoice::Approximate, CoverageMode::Approximate)
    ));
    if let Some(s) = &scale {
        index.set_dimension_scale(s.clone()).map_err(EngineError::Setup)?;
    }

    let engine_cfg = cfg.engine_config();
    let outcome = match cfg.mode {
        SearchMode::Coverage => fuzz(
            harness.model.as_ref(),
            seeds,
            harness.mutator.as_ref(),
            harness.objective.as_ref(),
            index,
            &engine_cfg,
            cfg.campaign_seed,
        )?,
        SearchMode::Random => random_search(
            harness.model.as_ref(),
            seeds,
            harness.mutator.as_ref(),
            harness.objective.as_ref(),
            index,
            &engine_cfg,
            cfg.campaign_seed,
        )?,
    };
    Ok(RunArtifacts { outcome, threshold, scale })
}

/// Headline numbers stored in `outcome.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeSummary {
    /// Always [`OUTCOME_FORMAT`].
    pub format: String,
    /// The novelty threshold actually used.
    pub threshold: f64,
    /// Iterations executed (may stop early).
    pub iterations_run: u64,
    /// Final corpus size including seeds.
    pub corpus_size: usize,
    /// How many of those are seeds.
    pub seed_count: usize,
    /// Test cases surfaced.
    pub testcase_count: usize,
}

/// Runs a campaign and writes the full directory.
///
/// The target directory must not already contain a campaign. When the
/// model fails on an input mid-campaign, the offending input is persisted
/// to `failed-input.json` before the error is returned.
pub fn run_to_dir(
    dir: &Path,
    ckpt: &Checkpoint,
    seeds: &[Payload],
    cfg: &CampaignConfig,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if dir.join("config.json").exists() {
        bail!("{} already holds a campaign; refusing to overwrite", dir.display());
    }

    write_json(&dir.join("config.json"), cfg)?;
    write_json(&dir.join("model.json"), ckpt)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let started = std::time::Instant::now();
    write_json(
        &dir.join("meta.json"),
        &serde_json::json!({ "created_unix_seconds": created }),
    )?;
    write_seeds(&dir.join("seeds"), seeds)?;

    let harness = build_harness(ckpt, cfg)?;
    let artifacts = match run_in_memory(&harness, seeds, cfg) {
        Ok(a) => a,
        Err(EngineError::Setup(e)) => bail!("campaign setup rejected: {e}"),
        Err(EngineError::InputFailure { iteration, payload, source }) => {
            write_json(
                &dir.join("failed-input.json"),
                &serde_json::json!({
                    "iteration": iteration,
                    "error": source.to_string(),
                    "payload": PayloadJson::from_core(&payload),
                }),
            )?;
            bail!(
                "the model failed on an input at iteration {iteration} ({source}); \
                 the input was saved to failed-input.json"
            );
        }
    };

    let corpus_dir = dir.join("corpus");
    fs::create_dir_all(&corpus_dir)?;
    for record in artifacts.outcome.corpus.records() {
        write_json(
            &corpus_dir.join(format!("{:06}.json", record.id)),
            &RecordJson::from_core(record),
        )?;
    }

    let tc_dir = dir.join("testcases");
    fs::create_dir_all(&tc_dir)?;
    for (i, tc) in artifacts.outcome.test_cases.iter().enumerate() {
        write_json(&tc_dir.join(format!("{i:06}.json")), &TestCaseJson::from_core(tc))?;
    }

    write_trace(&dir.join("trace.csv"), &artifacts.outcome.trace)?;
    let seed_count =
        artifacts.outcome.corpus.records().iter().filter(|r| r.parent_id.is_none()).count();
    write_json(
        &dir.join("outcome.json"),
        &OutcomeSummary {
            format: OUTCOME_FORMAT.to_owned(),
            threshold: artifacts.threshold,
            iterations_run: artifacts.outcome.corpus.iteration(),
            corpus_size: artifacts.outcome.corpus.len(),
            seed_count,
            testcase_count: artifacts.outcome.test_cases.len(),
        },
    )?;
    // Timestamps live only here, so everything else stays reproducible.
    write_json(
        &dir.join("meta.json"),
        &serde_json::json!({
            "created_unix_seconds": created,
            "wall_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(artifacts)
}

/// A campaign directory read back into memory.
pub struct LoadedCampaign {
    /// The configuration it ran with.
    pub config: CampaignConfig,
    /// The model it ran against.
    pub checkpoint: Checkpoint,
    /// The seed inputs.
    pub seeds: Vec<Payload>,
    /// Final corpus records, ordered by id.
    pub corpus: Vec<actfuzz_core::InputRecord>,
    /// Surfaced test cases.
    pub test_cases: Vec<TestCaseJson>,
    /// The progress trace.
    pub trace: actfuzz_core::Trace,
    /// Headline numbers.
    pub outcome: OutcomeSummary,
}

fn read_numbered_dir<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Vec<T>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

/// Reads a full campaign directory.
pub fn load_campaign(dir: &Path) -> Result<LoadedCampaign> {
    let config: CampaignConfig = read_json(&dir.join("config.json"))?;
    config.validate().with_context(|| format!("validating {}", dir.display()))?;
    let checkpoint = read_checkpoint(&dir.join("model.json"))?;
    let seeds = read_seeds(&dir.join("seeds"))?;
    let records: Vec<RecordJson> = read_numbered_dir(&dir.join("corpus"))?;
    let corpus = records.iter().map(RecordJson::to_core).collect();
    let test_cases = read_numbered_dir(&dir.join("testcases"))?;
    let trace = formats::read_trace(&dir.join("trace.csv"))?;
    let outcome: OutcomeSummary = read_json(&dir.join("outcome.json"))?;
    if outcome.format != OUTCOME_FORMAT {
        bail!("unexpected outcome format tag {:?}", outcome.format);
    }
    Ok(LoadedCampaign { config, checkpoint, seeds, corpus, test_cases, trace, outcome })
}

/// Re-runs the campaign a directory describes, writing a fresh directory.
///
/// The rerun uses only artifacts stored in the source directory, so equal
/// output files (timestamps aside) demonstrate end-to-end determinism.
pub fn replay_dir(src: &Path, dest: &Path) -> Result<RunArtifacts> {
    let config: CampaignConfig = read_json(&src.join("config.json"))?;
    let checkpoint = read_checkpoint(&src.join("model.json"))?;
    let seeds = read_seeds(&src.join("seeds"))?;
    run_to_dir(dest, &checkpoint, &seeds, &config)
}
