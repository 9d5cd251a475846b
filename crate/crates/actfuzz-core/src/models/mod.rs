//! Models under test.
//!
//! The fuzzing loop sees a model only through [`ModelUnderTest`]: evaluate an
//! input, get back a coverage vector (which activations the input lit up) and
//! a [`Metadata`] record (what the objectives inspect). Built-in models are a
//! small fully-connected classifier and a character-level recurrent language
//! model, each with a trainer sized for synthetic desk-scale datasets.

mod char_rnn;
mod mlp;

use alloc::string::String;
use alloc::vec::Vec;

use crate::mutate::Payload;
use crate::rng::Rng;
use crate::tensor::Vector;
use crate::Error;

pub use char_rnn::{
    mean_loss, train_char_rnn, CharRnnModel, CharRnnParts, CharRnnTrainConfig, CharRnnUnderTest,
    LstmState, Vocabulary,
};
pub use mlp::{
    accuracy, safe_cross_entropy, train_mlp, unsafe_cross_entropy, Activation, Layer, LossKind,
    MlpModel, MlpTrace, MlpTrainConfig, MlpUnderTest,
};

/// Which activations form the coverage vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageLayer {
    /// The output logits.
    Logits,
    /// The input to the final layer.
    Penultimate,
    /// The recurrent hidden state after the prime (recurrent models only).
    HiddenState,
}

/// Per-input evaluation outputs consumed by objectives.
///
/// Only the fields the active experiment produces are present; objectives
/// treat missing fields as unsatisfiable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    /// Logits from the full-precision path.
    pub logits_f32: Option<Vector>,
    /// Logits from the half-precision twin, when one is attached.
    pub logits_f16: Option<Vector>,
    /// Loss value, when the experiment monitors one.
    pub loss: Option<f64>,
    /// Sampled text, for language-model experiments.
    pub sampled_text: Option<String>,
}

/// One evaluated input: its coverage vector plus objective metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Activation vector whose novelty defines coverage.
    pub coverage: Vector,
    /// What the objectives get to inspect.
    pub metadata: Metadata,
}

/// The evaluation contract the fuzzing loop drives.
///
/// Implementations must be deterministic: the same input yields bit-identical
/// coverage and metadata, and the coverage dimension never changes.
pub trait ModelUnderTest {
    /// Evaluates one input.
    fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error>;

    /// Evaluates a batch; elementwise identical to calling [`evaluate`]
    /// (built-in models have no cross-batch coupling).
    ///
    /// [`evaluate`]: ModelUnderTest::evaluate
    fn evaluate_batch(&self, inputs: &[Payload]) -> Vec<Result<Evaluation, Error>> {
        inputs.iter().map(|p| self.evaluate(p)).collect()
    }
}

/// A labeled classification dataset with a fixed input range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Input vectors, all of one dimension.
    pub inputs: Vec<Vector>,
    /// Class labels, one per input, each below `classes`.
    pub labels: Vec<usize>,
    /// Number of classes.
    pub classes: usize,
    /// Valid input range (shared by mutation clipping).
    pub range: (f32, f32),
}

impl Dataset {
    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), Error> {
        if self.inputs.len() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                expected: self.inputs.len(),
                got: self.labels.len(),
            });
        }
        if self.classes == 0 {
            return Err(Error::InvalidParameter { what: "dataset needs at least one class" });
        }
        if !(self.range.0 <= self.range.1) {
            return Err(Error::InvalidParameter { what: "dataset range lower bound above upper" });
        }
        let dim = self.inputs.first().map(Vector::len).unwrap_or(0);
        for v in &self.inputs {
            if v.len() != dim {
                return Err(Error::ShapeMismatch { expected: dim, got: v.len() });
            }
            if v.as_slice().iter().any(|&x| !x.is_finite() || x < self.range.0 || x > self.range.1) {
                return Err(Error::InvalidParameter { what: "dataset input outside declared range" });
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::LabelOutOfRange { label: bad, classes: self.classes });
        }
        Ok(())
    }

    /// Input dimension (zero for an empty dataset).
    pub fn dim(&self) -> usize {
        self.inputs.first().map(Vector::len).unwrap_or(0)
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    /// True when the dataset has no examples.
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits off the first `fraction` of examples as a training set and the
    /// rest as a held-out set. Call after shuffling; the split is positional.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset), Error> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter { what: "split fraction outside [0, 1]" });
        }
        let cut = (self.len() as f64 * fraction) as usize;
        let take = |lo: usize, hi: usize| Dataset {
            inputs: self.inputs[lo..hi].to_vec(),
            labels: self.labels[lo..hi].to_vec(),
            classes: self.classes,
            range: self.range,
        };
        Ok((take(0, cut), take(cut, self.len())))
    }
}

/// Parameters for the synthetic blob dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    /// Number of classes (one blob each).
    pub classes: usize,
    /// Input dimension.
    pub dim: usize,
    /// Examples generated per class.
    pub per_class: usize,
    /// Value range; samples are clipped into it.
    pub range: (f32, f32),
    /// Blob centers stay this far inside the range at both ends.
    pub center_margin: f32,
    /// Per-coordinate standard deviation of samples around their center.
    pub noise: f32,
    /// Minimum Euclidean distance enforced between blob centers.
    pub min_center_distance: f32,
}

/// Generates a shuffled blob classification dataset.
///
/// Centers are drawn uniformly inside the margin-shrunk range and rejected
/// until all pairs are at least `min_center_distance` apart; each example is
/// its center plus Gaussian noise, clipped to the range.
pub fn generate_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset, Error> {
    if spec.classes == 0 || spec.dim == 0 || spec.per_class == 0 {
        return Err(Error::InvalidParameter { what: "blob spec has a zero dimension" });
    }
    if !(spec.range.0 < spec.range.1) {
        return Err(Error::InvalidParameter { what: "blob range is empty" });
    }
    if spec.noise < 0.0 || spec.center_margin < 0.0 || spec.min_center_distance < 0.0 {
        return Err(Error::InvalidParameter { what: "blob spec has a negative parameter" });
    }
    let lo = spec.range.0 + spec.center_margin;
    let hi = spec.range.1 - spec.center_margin;
    if !(lo <= hi) {
        return Err(Error::InvalidParameter { what: "blob center margin exhausts the range" });
    }
    let mut rng = Rng::new(seed);

    // Rejection-sample the centers.
    let mut centers: Vec<Vector> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while centers.len() < spec.classes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidParameter {
                what: "could not place blob centers at the requested separation",
            });
        }
        let cand: Vector = (0..spec.dim)
            .map(|_| lo + (rng.uniform() as f32) * (hi - lo))
            .collect();
        let ok = centers.iter().all(|c| {
            crate::tensor::euclidean_distance_unchecked(c.as_slice(), cand.as_slice())
                >= spec.min_center_distance as f64
        });
        if ok {
            centers.push(cand);
        }
    }

    let total = spec.classes * spec.per_class;
    let mut inputs = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class {
            let sample: Vector = center
                .as_slice()
                .iter()
                .map(|&c| {
                    (c + (rng.normal() * spec.noise as f64) as f32).clamp(spec.range.0, spec.range.1)
                })
                .collect();
            inputs.push(sample);
            labels.push(label);
        }
    }

    // Fisher-Yates shuffle so positional splits are class-balanced.
    for i in (1..total).rev() {
        let j = rng.index(i + 1);
        inputs.swap(i, j);
        labels.swap(i, j);
    }

    let dataset = Dataset { inputs, labels, classes: spec.classes, range: spec.range };
    dataset.validate()?;
    Ok(dataset)
}
