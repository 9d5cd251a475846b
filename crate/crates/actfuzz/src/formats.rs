//! On-disk formats: model checkpoints, payloads, corpus records, test
//! cases, traces, and word lists.
//!
//! Everything is JSON except traces (CSV) and text seeds (raw UTF-8), so
//! artifacts stay portable and diffable. Numbers are written in shortest
//! round-trip form, which reproduces the original `f32`/`f64` bits on
//! load; the non-finite values that some test cases exist to capture are
//! encoded as the strings `"NaN"`, `"Infinity"`, and `"-Infinity"` since
//! JSON has no literal for them. Serialization order is fixed by struct
//! declaration order, so re-serializing a loaded artifact is byte-stable.

use std::fs;
use std::path::Path;

use actfuzz_core::models::{
    Activation, CharRnnModel, CharRnnParts, Layer, Metadata, MlpModel,
};
use actfuzz_core::{
    InputRecord, Matrix, Payload, TestCase, Trace, TraceRow, Vector,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Format tag carried by model checkpoint files.
pub const MODEL_FORMAT: &str = "actfuzz-model";
/// Current checkpoint schema version.
pub const MODEL_VERSION: u32 = 1;

/// Serializes a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a JSON file into a value.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A float that may be NaN or infinite.
///
/// Finite values are plain JSON numbers; the three non-finite values are
/// tagged strings. `f32` fields reuse this representation — the widening
/// to `f64` is exact, and narrowing on load recovers the original bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FloatRepr {
    /// A finite value.
    Number(f64),
    /// `"NaN"`, `"Infinity"`, or `"-Infinity"`.
    Special(String),
}

impl FloatRepr {
    /// Encodes any `f64`.
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            FloatRepr::Number(v)
        } else if v.is_nan() {
            FloatRepr::Special("NaN".to_owned())
        } else if v > 0.0 {
            FloatRepr::Special("Infinity".to_owned())
        } else {
            FloatRepr::Special("-Infinity".to_owned())
        }
    }

    /// Decodes back to `f64`.
    pub fn to_f64(&self) -> Result<f64> {
        match self {
            FloatRepr::Number(v) if v.is_finite() => Ok(*v),
            FloatRepr::Number(v) => bail!("non-finite number {v} must be encoded as a string"),
            FloatRepr::Special(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                other => bail!("unknown float tag {other:?}"),
            },
        }
    }
}

fn encode_f32_vec(v: &Vector) -> Vec<FloatRepr> {
    v.as_slice().iter().map(|&x| FloatRepr::from_f64(x as f64)).collect()
}

fn decode_f32_vec(v: &[FloatRepr]) -> Result<Vector> {
    let data: Vec<f32> =
        v.iter().map(|r| r.to_f64().map(|x| x as f32)).collect::<Result<_>>()?;
    Ok(Vector::from_vec(data))
}

/// A dense matrix with explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    /// Row count.
    pub rows: usize,
    /// Column count.
    pub cols: usize,
    /// Row-major values; always finite in a valid checkpoint.
    pub data: Vec<f32>,
}

impl MatrixJson {
    fn from_core(m: &Matrix) -> Self {
        MatrixJson { rows: m.rows(), cols: m.cols(), data: m.as_slice().to_vec() }
    }

    fn to_core(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
            .map_err(|e| anyhow::anyhow!("bad matrix shape: {e}"))
    }
}

/// One fuzzing input, image or text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayloadJson {
    /// Flat pixel values.
    Image {
        /// Pixels in row-major order; always finite.
        pixels: Vec<f32>,
    },
    /// A character string.
    Text {
        /// The text itself.
        text: String,
    },
}

impl PayloadJson {
    /// Encodes a core payload.
    pub fn from_core(p: &Payload) -> Self {
        match p {
            Payload::Image(img) => PayloadJson::Image { pixels: img.pixels.as_slice().to_vec() },
            Payload::Text(t) => PayloadJson::Text { text: t.to_string() },
        }
    }

    /// Decodes to a core payload.
    pub fn to_core(&self) -> Payload {
        match self {
            PayloadJson::Image { pixels } => {
                Payload::Image(actfuzz_core::ImageInput::new(Vector::from_vec(pixels.clone())))
            }
            PayloadJson::Text { text } => Payload::Text(actfuzz_core::TextInput::from_str(text)),
        }
    }
}

/// Objective-visible evaluation metadata.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MetadataJson {
    /// Scalar loss, possibly non-finite.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<FloatRepr>,
    /// Full-precision logits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logits_f32: Option<Vec<FloatRepr>>,
    /// Reduced-precision logits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logits_f16: Option<Vec<FloatRepr>>,
    /// Sampled text continuation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampled_text: Option<String>,
}

impl MetadataJson {
    /// Encodes core metadata.
    pub fn from_core(m: &Metadata) -> Self {
        MetadataJson {
            loss: m.loss.map(FloatRepr::from_f64),
            logits_f32: m.logits_f32.as_ref().map(encode_f32_vec),
            logits_f16: m.logits_f16.as_ref().map(encode_f32_vec),
            sampled_text: m.sampled_text.clone(),
        }
    }

    /// Decodes to core metadata.
    pub fn to_core(&self) -> Result<Metadata> {
        Ok(Metadata {
            loss: self.loss.as_ref().map(|r| r.to_f64()).transpose()?,
            logits_f32: self.logits_f32.as_ref().map(|v| decode_f32_vec(v)).transpose()?,
            logits_f16: self.logits_f16.as_ref().map(|v| decode_f32_vec(v)).transpose()?,
            sampled_text: self.sampled_text.clone(),
        })
    }
}

/// One corpus record with lineage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordJson {
    /// Corpus position.
    pub id: usize,
    /// Seed this element descends from.
    pub seed_ancestor_id: usize,
    /// Direct parent; absent for seeds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parent_id: Option<usize>,
    /// Iteration at which the element was added.
    pub t_k: u64,
    /// The input.
    pub payload: PayloadJson,
}

impl RecordJson {
    /// Encodes a core record.
    pub fn from_core(r: &InputRecord) -> Self {
        RecordJson {
            id: r.id,
            seed_ancestor_id: r.seed_ancestor_id,
            parent_id: r.parent_id,
            t_k: r.t_k,
            payload: PayloadJson::from_core(&r.payload),
        }
    }

    /// Decodes to a core record.
    pub fn to_core(&self) -> InputRecord {
        InputRecord {
            id: self.id,
            payload: self.payload.to_core(),
            seed_ancestor_id: self.seed_ancestor_id,
            parent_id: self.parent_id,
            t_k: self.t_k,
        }
    }
}

/// One surfaced test case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestCaseJson {
    /// Name of the objective that fired.
    pub objective: String,
    /// Iteration of discovery.
    pub iteration: u64,
    /// The offending input.
    pub payload: PayloadJson,
    /// The evaluation evidence.
    pub metadata: MetadataJson,
}

impl TestCaseJson {
    /// Encodes a core test case.
    pub fn from_core(tc: &TestCase) -> Self {
        TestCaseJson {
            objective: tc.objective.to_owned(),
            iteration: tc.iteration,
            payload: PayloadJson::from_core(&tc.payload),
            metadata: MetadataJson::from_core(&tc.metadata),
        }
    }
}

/// One dense layer of a classifier checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerJson {
    /// Weights, `outputs x inputs`.
    pub weight: MatrixJson,
    /// Bias, one per output.
    pub bias: Vec<f32>,
    /// `"relu"` or `"identity"`.
    pub activation: String,
}

/// A feed-forward classifier's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpJson {
    /// Valid input range, `[low, high]`.
    pub input_range: (f32, f32),
    /// Layers in forward order.
    pub layers: Vec<LayerJson>,
}

impl MlpJson {
    /// Encodes a core model.
    pub fn from_core(model: &MlpModel) -> Self {
        MlpJson {
            input_range: model.input_range,
            layers: model
                .layers()
                .iter()
                .map(|l| LayerJson {
                    weight: MatrixJson::from_core(&l.weight),
                    bias: l.bias.as_slice().to_vec(),
                    activation: match l.activation {
                        Activation::Relu => "relu".to_owned(),
                        Activation::Identity => "identity".to_owned(),
                    },
                })
                .collect(),
        }
    }

    /// Decodes to a core model, validating shapes.
    pub fn to_core(&self) -> Result<MlpModel> {
        let layers: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| {
                let activation = match l.activation.as_str() {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    other => bail!("unknown activation {other:?}"),
                };
                Ok(Layer {
                    weight: l.weight.to_core()?,
                    bias: Vector::from_vec(l.bias.clone()),
                    activation,
                })
            })
            .collect::<Result<_>>()?;
        MlpModel::new(layers, self.input_range).map_err(|e| anyhow::anyhow!("bad model: {e}"))
    }
}

/// One recurrent layer of a language-model checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayerJson {
    /// Input weights, `input_dim x 4*hidden`, input-major.
    pub w_x: MatrixJson,
    /// Recurrent weights, `4*hidden x hidden`.
    pub w_h: MatrixJson,
    /// Gate biases in input/forget/cell/output block order.
    pub bias: Vec<f32>,
}

/// A character language model's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharRnnJson {
    /// Vocabulary characters concatenated in index order.
    pub vocab: String,
    /// Hidden width per layer.
    pub hidden: usize,
    /// Stacked recurrent layers.
    pub layers: Vec<LstmLayerJson>,
    /// Output projection, `vocab x hidden`.
    pub w_out: MatrixJson,
    /// Output bias, one per vocabulary character.
    pub b_out: Vec<f32>,
}

impl CharRnnJson {
    /// Encodes a core model.
    pub fn from_core(model: &CharRnnModel) -> Self {
        let parts = model.to_parts();
        CharRnnJson {
            vocab: parts.vocab.iter().collect(),
            hidden: parts.hidden,
            layers: parts
                .input_weights
                .iter()
                .zip(&parts.recurrent_weights)
                .zip(&parts.gate_biases)
                .map(|((w_x, w_h), bias)| LstmLayerJson {
                    w_x: MatrixJson::from_core(w_x),
                    w_h: MatrixJson::from_core(w_h),
                    bias: bias.as_slice().to_vec(),
                })
                .collect(),
            w_out: MatrixJson::from_core(&parts.output_weight),
            b_out: parts.output_bias.as_slice().to_vec(),
        }
    }

    /// Decodes to a core model, validating shapes.
    pub fn to_core(&self) -> Result<CharRnnModel> {
        let parts = CharRnnParts {
            vocab: self.vocab.chars().collect(),
            hidden: self.hidden,
            input_weights: self
                .layers
                .iter()
                .map(|l| l.w_x.to_core())
                .collect::<Result<_>>()?,
            recurrent_weights: self
                .layers
                .iter()
                .map(|l| l.w_h.to_core())
                .collect::<Result<_>>()?,
            gate_biases: self
                .layers
                .iter()
                .map(|l| Vector::from_vec(l.bias.clone()))
                .collect(),
            output_weight: self.w_out.to_core()?,
            output_bias: Vector::from_vec(self.b_out.clone()),
        };
        CharRnnModel::from_parts(parts).map_err(|e| anyhow::anyhow!("bad model: {e}"))
    }
}

/// The model parameters inside a checkpoint, tagged by architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpecJson {
    /// Feed-forward classifier.
    Mlp(MlpJson),
    /// Character language model.
    CharRnn(CharRnnJson),
}

/// Optional training provenance stored with a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainInfo {
    /// SGD steps taken.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steps: Option<usize>,
    /// Learning rate used.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lr: Option<f32>,
    /// Training seed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Dataset generation seed, for classifiers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset_seed: Option<u64>,
    /// Free-form description of the training loss.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<String>,
    /// Accuracy on the training split.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_accuracy: Option<f64>,
    /// Accuracy on the held-out split.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_accuracy: Option<f64>,
}

/// A self-describing model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Always [`MODEL_FORMAT`].
    pub format: String,
    /// Schema version, currently [`MODEL_VERSION`].
    pub version: u32,
    /// Which experiment the model was trained for: `"nan"`, `"quant"`, or
    /// `"text"`.
    pub experiment: String,
    /// The parameters.
    pub model: ModelSpecJson,
    /// Training provenance.
    #[serde(default)]
    pub train: TrainInfo,
}

impl Checkpoint {
    /// Wraps a classifier.
    pub fn from_mlp(model: &MlpModel, experiment: &str, train: TrainInfo) -> Self {
        Checkpoint {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            experiment: experiment.to_owned(),
            model: ModelSpecJson::Mlp(MlpJson::from_core(model)),
            train,
        }
    }

    /// Wraps a language model.
    pub fn from_char_rnn(model: &CharRnnModel, train: TrainInfo) -> Self {
        Checkpoint {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            experiment: "text".to_owned(),
            model: ModelSpecJson::CharRnn(CharRnnJson::from_core(model)),
            train,
        }
    }

    /// Checks the container tags.
    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            bail!("not a model checkpoint (format tag {:?})", self.format);
        }
        if self.version != MODEL_VERSION {
            bail!("unsupported checkpoint version {}", self.version);
        }
        Ok(())
    }

    /// The classifier inside, if this is a classifier checkpoint.
    pub fn mlp(&self) -> Result<MlpModel> {
        match &self.model {
            ModelSpecJson::Mlp(m) => m.to_core(),
            ModelSpecJson::CharRnn(_) => bail!("checkpoint holds a language model"),
        }
    }

    /// The language model inside, if this is a language-model checkpoint.
    pub fn char_rnn(&self) -> Result<CharRnnModel> {
        match &self.model {
            ModelSpecJson::CharRnn(m) => m.to_core(),
            ModelSpecJson::Mlp(_) => bail!("checkpoint holds a classifier"),
        }
    }
}

/// Loads and validates a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    ckpt.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(ckpt)
}

/// Header line of every trace file.
pub const TRACE_HEADER: &str = "iteration,corpus_size,testcases";

/// Writes a progress trace as CSV.
pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut out = String::with_capacity(trace.rows.len() * 16 + 32);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in &trace.rows {
        out.push_str(&format!("{},{},{}\n", row.iteration, row.corpus_size, row.testcases));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a progress trace back.
pub fn read_trace(path: &Path) -> Result<Trace> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => bail!("bad trace header {other:?} in {}", path.display()),
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = || -> Result<&str> {
            parts.next().with_context(|| format!("short row {} in {}", n + 2, path.display()))
        };
        let iteration = field()?.parse()?;
        let corpus_size = field()?.parse()?;
        let testcases = field()?.parse()?;
        rows.push(TraceRow { iteration, corpus_size, testcases });
    }
    Ok(Trace { rows })
}

/// Reads a word list: one word per line, blank lines ignored, case-folded.
pub fn read_blacklist(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Writes seed payloads into a directory: images as single-payload JSON
/// files, text as raw UTF-8.
pub fn write_seeds(dir: &Path, seeds: &[Payload]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, seed) in seeds.iter().enumerate() {
        match seed {
            Payload::Image(_) => {
                write_json(&dir.join(format!("seed-{i:03}.json")), &PayloadJson::from_core(seed))?;
            }
            Payload::Text(t) => {
                fs::write(dir.join(format!("seed-{i:03}.txt")), t.to_string())
                    .with_context(|| format!("writing seed {i}"))?;
            }
        }
    }
    Ok(())
}

/// Loads every seed in a directory, ordered by file name. `.json` files
/// hold image payloads, `.txt` files hold text payloads.
pub fn read_seeds(dir: &Path) -> Result<Vec<Payload>> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut seeds = Vec::new();
    for path in names {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let p: PayloadJson = read_json(&path)?;
                seeds.push(p.to_core());
            }
            Some("txt") => {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                seeds.push(Payload::Text(actfuzz_core::TextInput::from_str(
                    text.trim_end_matches('\n'),
                )));
            }
            _ => bail!("unrecognized seed file {}", path.display()),
        }
    }
    if seeds.is_empty() {
        bail!("no seeds found in {}", dir.display());
    }
    Ok(seeds)
}
