//! The three shipped experiments: model construction, training, and seed
//! selection at desk scale.
//!
//! Each builder is fully deterministic in its seed — dataset, trained
//! parameters, and seed inputs all derive from it — so experiments can be
//! regenerated anywhere from a single number.

use actfuzz_core::models::{
    accuracy, generate_blobs, train_char_rnn, train_mlp, BlobSpec, CharRnnModel,
    CharRnnTrainConfig, Dataset, LossKind, MlpModel, MlpTrainConfig,
};
use actfuzz_core::{ImageInput, Payload, Rng, TextInput};
use anyhow::{bail, Result};

use crate::formats::{Checkpoint, TrainInfo};

// ---------------------------------------------------------------------------
// Non-finite-loss hunt
// ---------------------------------------------------------------------------

/// Where the training data actually lives.
pub const NAN_DATA_RANGE: (f32, f32) = (0.0, 4.0);
/// The declared (fuzzable) input range. Much wider than the data on
/// purpose: the classifier behaves on the data but its naive
/// exponential-based loss overflows for inputs deep in the unused part of
/// the range, which is exactly the bug the hunt should surface.
pub const NAN_INPUT_RANGE: (f32, f32) = (0.0, 1024.0);
/// Classifier layer widths.
pub const NAN_DIMS: [usize; 3] = [64, 32, 3];
/// Training steps.
pub const NAN_STEPS: usize = 3000;
/// Mutation noise recommended for this hunt. Large on purpose: logits
/// grow about 1.4 units per unit of input, so the loss overflows around
/// input scale 500. One mutation step from a seed cannot get there (the
/// unguided control stays finite), but an accumulating corpus walk can.
pub const NAN_SIGMA: f32 = 8.0;

/// Everything the non-finite-loss hunt needs.
pub struct NanAssets {
    /// The trained classifier.
    pub model: MlpModel,
    /// Training split.
    pub train_data: Dataset,
    /// Held-out split; the trained model must be finite on all of it.
    pub test_data: Dataset,
    /// Serializable checkpoint (model plus training provenance).
    pub checkpoint: Checkpoint,
    /// Fuzzing seeds: the held-out inputs.
    pub seeds: Vec<Payload>,
}

fn image_payloads(data: &Dataset) -> Vec<Payload> {
    data.inputs.iter().map(|v| Payload::Image(ImageInput::new(v.clone()))).collect()
}

/// Builds and trains the non-finite-loss experiment.
pub fn build_nan_assets(seed: u64) -> Result<NanAssets> {
    let spec = BlobSpec {
        classes: 3,
        dim: NAN_DIMS[0],
        per_class: 100,
        range: NAN_DATA_RANGE,
        center_margin: 0.5,
        noise: 0.4,
        min_center_distance: 2.0,
    };
    let mut data = generate_blobs(&spec, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    data.range = NAN_INPUT_RANGE;
    data.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let (train_data, test_data) = data.split(0.75).map_err(|e| anyhow::anyhow!("{e}"))?;

    let cfg = MlpTrainConfig {
        steps: NAN_STEPS,
        batch: 32,
        lr: 0.01,
        seed: seed.wrapping_add(1),
        loss: LossKind::Unsafe,
    };
    let model = train_mlp(&train_data, &NAN_DIMS, &cfg)
        .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    let train_acc = accuracy(&model, &train_data).map_err(|e| anyhow::anyhow!("{e}"))?;
    let test_acc = accuracy(&model, &test_data).map_err(|e| anyhow::anyhow!("{e}"))?;
    let info = TrainInfo {
        steps: Some(cfg.steps),
        lr: Some(cfg.lr),
        seed: Some(cfg.seed),
        dataset_seed: Some(seed),
        loss: Some("unsafe_cross_entropy".to_owned()),
        train_accuracy: Some(train_acc),
        test_accuracy: Some(test_acc),
    };
    let checkpoint = Checkpoint::from_mlp(&model, "nan", info);
    let seeds = image_payloads(&test_data);
    Ok(NanAssets { model, train_data, test_data, checkpoint, seeds })
}

// ---------------------------------------------------------------------------
// Half-precision disagreement hunt
// ---------------------------------------------------------------------------

/// Input range for the quantization experiment.
pub const QUANT_RANGE: (f32, f32) = (0.0, 1.0);
/// Classifier layer widths.
pub const QUANT_DIMS: [usize; 3] = [16, 24, 3];
/// Training steps.
pub const QUANT_STEPS: usize = 1500;
/// Distance bound (per pixel) of mutants from their seed ancestor.
pub const QUANT_RADIUS: f64 = 0.4;
/// Mutation noise recommended for this hunt.
pub const QUANT_SIGMA: f32 = 0.15;
/// How many seed images the hunt fuzzes.
pub const QUANT_SEED_COUNT: usize = 20;

/// Everything the half-precision disagreement hunt needs.
pub struct QuantAssets {
    /// The trained classifier (full precision; the harness builds the
    /// truncated twin).
    pub model: MlpModel,
    /// Training split.
    pub train_data: Dataset,
    /// Held-out split; truncation must not flip any decision on it.
    pub test_data: Dataset,
    /// Serializable checkpoint.
    pub checkpoint: Checkpoint,
    /// Fuzzing seeds: correctly classified held-out images of middling
    /// confidence.
    pub seeds: Vec<Payload>,
}

/// Builds and trains the half-precision disagreement experiment.
pub fn build_quant_assets(seed: u64) -> Result<QuantAssets> {
    let spec = BlobSpec {
        classes: 3,
        dim: QUANT_DIMS[0],
        per_class: 100,
        range: QUANT_RANGE,
        center_margin: 0.15,
        noise: 0.07,
        min_center_distance: 0.35,
    };
    let data = generate_blobs(&spec, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (train_data, test_data) = data.split(0.75).map_err(|e| anyhow::anyhow!("{e}"))?;

    let cfg = MlpTrainConfig {
        steps: QUANT_STEPS,
        batch: 32,
        lr: 0.1,
        seed: seed.wrapping_add(1),
        loss: LossKind::Safe,
    };
    let model = train_mlp(&train_data, &QUANT_DIMS, &cfg)
        .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    let train_acc = accuracy(&model, &train_data).map_err(|e| anyhow::anyhow!("{e}"))?;
    let test_acc = accuracy(&model, &test_data).map_err(|e| anyhow::anyhow!("{e}"))?;
    let info = TrainInfo {
        steps: Some(cfg.steps),
        lr: Some(cfg.lr),
        seed: Some(cfg.seed),
        dataset_seed: Some(seed),
        loss: Some("safe_cross_entropy".to_owned()),
        train_accuracy: Some(train_acc),
        test_accuracy: Some(test_acc),
    };
    let checkpoint = Checkpoint::from_mlp(&model, "quant", info);
    let seeds = select_quant_seeds(&model, &test_data, QUANT_SEED_COUNT)?;
    Ok(QuantAssets { model, train_data, test_data, checkpoint, seeds })
}

/// Picks fuzzing seeds for the disagreement hunt: correctly classified
/// held-out points whose top-two logit gap sits closest to the median gap.
///
/// Points right at the decision boundary would hand wins to unguided
/// search; points deep inside a class may put the boundary outside the
/// mutation ball. Middling confidence keeps the hunt meaningful.
pub fn select_quant_seeds(model: &MlpModel, data: &Dataset, count: usize) -> Result<Vec<Payload>> {
    let mut gaps: Vec<(usize, f32)> = Vec::new();
    for (i, (x, &label)) in data.inputs.iter().zip(&data.labels).enumerate() {
        let trace = model.forward(x.as_slice()).map_err(|e| anyhow::anyhow!("{e}"))?;
        let logits = trace.logits().as_slice();
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap());
        if order[0] != label {
            continue;
        }
        gaps.push((i, logits[order[0]] - logits[order[1]]));
    }
    if gaps.len() < count {
        bail!("only {} correctly classified held-out points; need {count}", gaps.len());
    }
    let mut sorted: Vec<f32> = gaps.iter().map(|&(_, g)| g).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    gaps.sort_by(|a, b| {
        (a.1 - median)
            .abs()
            .partial_cmp(&(b.1 - median).abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    let mut picks: Vec<usize> = gaps[..count].iter().map(|&(i, _)| i).collect();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|i| Payload::Image(ImageInput::new(data.inputs[i].clone())))
        .collect())
}

// ---------------------------------------------------------------------------
// Text-policy hunt
// ---------------------------------------------------------------------------

/// The forbidden words of the shipped text policy.
pub const DEFAULT_BLACKLIST: [&str; 10] = [
    "emu", "kiwi", "lark", "mole", "newt", "okapi", "puma", "quail", "raven", "sloth",
];

/// Ordinary vocabulary of the synthetic text corpus.
const COMMON_WORDS: [&str; 40] = [
    "the", "a", "and", "we", "saw", "went", "to", "over", "under", "near", "old", "new", "big",
    "small", "red", "green", "house", "river", "hill", "tree", "road", "field", "stone", "light",
    "dark", "day", "night", "rain", "wind", "sun", "walked", "looked", "found", "took", "gave",
    "came", "left", "stayed", "very", "then",
];

/// Words in the synthetic corpus.
pub const TEXT_CORPUS_WORDS: usize = 4000;
/// Per-word probability of drawing from the blacklist (split evenly), so
/// each forbidden word is rare but learnable.
const TEXT_BLACKLIST_PROB: f64 = 0.05;
/// Probability a drawn word is doubled, teaching the model that immediate
/// repetition occurs (two in a row is allowed; three is a violation).
const TEXT_DOUBLE_PROB: f64 = 0.12;
/// Probability a doubled word extends to a triple. The corpus must show
/// over-repetition occasionally or the model never produces it, and the
/// policy hunt has nothing at all to find.
const TEXT_TRIPLE_PROB: f64 = 0.5;

/// Language-model width.
pub const TEXT_HIDDEN: usize = 32;
/// Training steps.
pub const TEXT_STEPS: usize = 6000;
/// Characters sampled per evaluation.
pub const TEXT_SAMPLE_LENGTH: usize = 36;

/// Generates the synthetic lowercase word-stream corpus.
pub fn build_text_corpus(seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let mut words: Vec<&str> = Vec::with_capacity(TEXT_CORPUS_WORDS + 16);
    while words.len() < TEXT_CORPUS_WORDS {
        let word = if rng.uniform() < TEXT_BLACKLIST_PROB {
            DEFAULT_BLACKLIST[rng.index(DEFAULT_BLACKLIST.len())]
        } else {
            COMMON_WORDS[rng.index(COMMON_WORDS.len())]
        };
        words.push(word);
        if rng.uniform() < TEXT_DOUBLE_PROB {
            words.push(word);
            if rng.uniform() < TEXT_TRIPLE_PROB {
                words.push(word);
            }
        }
    }
    words.join(" ")
}

/// Everything the text-policy hunt needs.
pub struct TextAssets {
    /// The trained language model.
    pub model: CharRnnModel,
    /// The corpus it was trained on.
    pub corpus: String,
    /// Serializable checkpoint.
    pub checkpoint: Checkpoint,
    /// Fuzzing seeds: short prompt strings.
    pub seeds: Vec<Payload>,
    /// The policy blacklist.
    pub blacklist: Vec<String>,
}

/// Builds and trains the text-policy experiment.
pub fn build_text_assets(seed: u64) -> Result<TextAssets> {
    let corpus = build_text_corpus(seed);
    build_text_assets_from_corpus(&corpus, seed)
}

/// Same, over a caller-supplied training corpus.
pub fn build_text_assets_from_corpus(corpus: &str, seed: u64) -> Result<TextAssets> {
    let cfg = CharRnnTrainConfig {
        hidden: TEXT_HIDDEN,
        layers: 1,
        steps: TEXT_STEPS,
        seq_len: TEXT_SAMPLE_LENGTH,
        batch: 8,
        lr: 0.4,
        grad_clip: 5.0,
        seed: seed.wrapping_add(1),
    };
    let model = train_char_rnn(corpus, &cfg).map_err(|e| anyhow::anyhow!("training failed: {e}"))?;
    let loss = actfuzz_core::models::mean_loss(&model, corpus, cfg.seq_len)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let info = TrainInfo {
        steps: Some(cfg.steps),
        lr: Some(cfg.lr),
        seed: Some(cfg.seed),
        dataset_seed: Some(seed),
        loss: Some(format!("char cross-entropy {loss:.4}")),
        train_accuracy: None,
        test_accuracy: None,
    };
    let checkpoint = Checkpoint::from_char_rnn(&model, info);

    let seeds: Vec<Payload> = ["the ", "we saw a ", "a big "]
        .iter()
        .map(|p| Payload::Text(TextInput::from_str(p)))
        .collect();
    for payload in &seeds {
        if let Payload::Text(t) = payload {
            for ch in t.to_string().chars() {
                if model.vocab().index_of(ch).is_none() {
                    bail!("seed prompt contains out-of-vocabulary character {ch:?}");
                }
            }
        }
    }
    Ok(TextAssets {
        model,
        corpus: corpus.to_owned(),
        checkpoint,
        seeds,
        blacklist: DEFAULT_BLACKLIST.iter().map(|s| s.to_string()).collect(),
    })
}
