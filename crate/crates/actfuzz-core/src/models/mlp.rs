//! Fully-connected classifier, cross-entropy losses, trainer, and the
//! half-precision twin evaluation.
//!
//! Two loss implementations coexist on purpose. The *unsafe* one evaluates
//! the textbook formula `-log(exp(z_label) / sum_j exp(z_j))` literally, with
//! no max-subtraction and no clamping — large logits overflow `exp` and the
//! result degenerates to NaN or infinity. That failure mode is the hunting
//! target of the non-finiteness experiment, so the loss is exposed in
//! evaluation metadata exactly as computed. The *safe* one is the standard
//! max-subtracted log-sum-exp, finite for all finite logits. Both evaluate in
//! `f64` so their values are reproducible reference quantities independent of
//! summation order tricks.

use alloc::vec::Vec;

use super::{CoverageLayer, Dataset, Evaluation, Metadata, ModelUnderTest};
use crate::half::truncate_vector;
use crate::math;
use crate::mutate::Payload;
use crate::rng::Rng;
use crate::tensor::{argmax, Matrix, Vector};
use crate::Error;

/// Elementwise activation at a layer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, x)`.
    Relu,
    /// Pass-through (used by the logit layer).
    Identity,
}

impl Activation {
    fn apply(&self, v: &mut Vector) {
        if let Activation::Relu = self {
            for x in v.as_mut_slice() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
    }
}

/// One dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Weight matrix, `outputs x inputs`.
    pub weight: Matrix,
    /// Bias, one per output.
    pub bias: Vector,
    /// Activation applied to `Wx + b`.
    pub activation: Activation,
}

/// A fully-connected classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    /// Valid input range, carried with the model so campaigns clip mutants
    /// consistently with the training data.
    pub input_range: (f32, f32),
}

/// Everything a forward pass produces: pre-activations and post-activation
/// outputs per layer, in order. The last post-activation is the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    /// `Wx + b` per layer.
    pub pre: Vec<Vector>,
    /// Activation outputs per layer.
    pub post: Vec<Vector>,
}

impl MlpTrace {
    /// The class logits.
    pub fn logits(&self) -> &Vector {
        self.post.last().expect("a model has at least one layer")
    }
}

impl MlpModel {
    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn new(layers: Vec<Layer>, input_range: (f32, f32)) -> Result<Self, Error> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter { what: "model needs at least one layer" });
        }
        for pair in layers.windows(2) {
            if pair[1].weight.cols() != pair[0].weight.rows() {
                return Err(Error::ShapeMismatch {
                    expected: pair[0].weight.rows(),
                    got: pair[1].weight.cols(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::ShapeMismatch {
                    expected: layer.weight.rows(),
                    got: layer.bias.len(),
                });
            }
        }
        Ok(MlpModel { layers, input_range })
    }

    /// Random initialization: hidden layers get ReLU and He-scaled weights
    /// (`N(0, 2/fan_in)`), the final layer is the identity logit layer;
    /// biases start at zero.
    pub fn init(dims: &[usize], input_range: (f32, f32), seed: u64) -> Result<Self, Error> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter { what: "architecture needs input and output sizes" });
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter { what: "layer sizes must be positive" });
        }
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut weight = Matrix::zeros(fan_out, fan_in);
            weight.fill_gaussian(math::sqrtf(2.0 / fan_in as f32), &mut rng);
            let last = i == dims.len() - 2;
            layers.push(Layer {
                weight,
                bias: Vector::zeros(fan_out),
                activation: if last { Activation::Identity } else { Activation::Relu },
            });
        }
        MlpModel::new(layers, input_range)
    }

    /// The layers, first to last.
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Expected input dimension.
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    /// Number of classes (logit count).
    pub fn class_count(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    /// Runs the input through every layer, recording all activations.
    pub fn forward(&self, x: &[f32]) -> Result<MlpTrace, Error> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = Vector::from_vec(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.weight.matvec(current.as_slice());
            for (zi, &b) in z.as_mut_slice().iter_mut().zip(layer.bias.as_slice()) {
                *zi += b;
            }
            pre.push(z.clone());
            layer.activation.apply(&mut z);
            post.push(z.clone());
            current = z;
        }
        Ok(MlpTrace { pre, post })
    }

    /// Forward pass of the half-precision twin: weights are already
    /// truncated in `self`; when `truncate_activations` is set, the input
    /// and every layer output are rounded through binary16 as well
    /// (arithmetic between truncations stays in `f32`).
    pub fn forward_truncated(&self, x: &[f32], truncate_activations: bool) -> Result<Vector, Error> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut current = Vector::from_vec(x.to_vec());
        if truncate_activations {
            current = truncate_vector(&current);
        }
        for layer in &self.layers {
            let mut z = layer.weight.matvec(current.as_slice());
            for (zi, &b) in z.as_mut_slice().iter_mut().zip(layer.bias.as_slice()) {
                *zi += b;
            }
            layer.activation.apply(&mut z);
            if truncate_activations {
                z = truncate_vector(&z);
            }
            current = z;
        }
        Ok(current)
    }

    /// A copy of the model with every weight and bias rounded through
    /// binary16, as a half-precision deployment would store them.
    pub fn truncated(&self) -> MlpModel {
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let data: Vec<f32> =
                    layer.weight.as_slice().iter().map(|&w| crate::half::truncate(w)).collect();
                Layer {
                    weight: Matrix::from_vec(layer.weight.rows(), layer.weight.cols(), data)
                        .expect("shape preserved"),
                    bias: truncate_vector(&layer.bias),
                    activation: layer.activation,
                }
            })
            .collect();
        MlpModel { layers, input_range: self.input_range }
    }

    /// True when every weight and bias is finite.
    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.all_finite() && l.bias.all_finite())
    }
}

/// Cross-entropy evaluated exactly as the naive formula reads:
/// `-log(exp(z_label) / sum_j exp(z_j))`, in `f64`, with no rescaling.
///
/// Logits around 710 overflow `exp(f64)` to infinity, making the quotient
/// NaN; very negative label logits underflow the quotient to zero, making
/// the loss +infinity. Both outcomes are returned untouched.
pub fn unsafe_cross_entropy(logits: &[f32], label: usize) -> Result<f64, Error> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, classes: logits.len() });
    }
    let mut sum = 0.0f64;
    for &z in logits {
        sum += math::exp(z as f64);
    }
    let p = math::exp(logits[label] as f64) / sum;
    Ok(-math::ln(p))
}

/// Numerically stable cross-entropy: max-subtracted log-sum-exp in `f64`.
/// Finite for all finite logits.
pub fn safe_cross_entropy(logits: &[f32], label: usize) -> Result<f64, Error> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, classes: logits.len() });
    }
    // f64::max skips NaN, but a NaN logit still reaches the result through
    // the exponential sum.
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
    let mut sum = 0.0f64;
    for &z in logits {
        sum += math::exp(z as f64 - max);
    }
    Ok(max + math::ln(sum) - logits[label] as f64)
}

/// Which gradient path the trainer differentiates through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Gradients of the naive loss: the softmax inside is computed without
    /// max-subtraction in `f32`, so a model whose logits grow too large
    /// diverges — faithfully.
    Unsafe,
    /// Gradients of the stable loss (max-subtracted softmax).
    Safe,
}

/// Trainer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrainConfig {
    /// SGD steps.
    pub steps: usize,
    /// Examples per step, sampled with replacement.
    pub batch: usize,
    /// Fixed learning rate.
    pub lr: f32,
    /// Seed for initialization and batch sampling.
    pub seed: u64,
    /// Loss whose gradients drive the updates.
    pub loss: LossKind,
}

/// Softmax of the logits for gradient purposes, honoring the loss kind.
fn softmax_for_gradient(logits: &[f32], kind: LossKind) -> Vector {
    let mut out = Vec::with_capacity(logits.len());
    match kind {
        LossKind::Unsafe => {
            let mut sum = 0.0f32;
            for &z in logits {
                let e = math::expf(z);
                out.push(e);
                sum += e;
            }
            for e in &mut out {
                *e /= sum;
            }
        }
        LossKind::Safe => {
            let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| if b > a { b } else { a });
            let mut sum = 0.0f32;
            for &z in logits {
                let e = math::expf(z - max);
                out.push(e);
                sum += e;
            }
            for e in &mut out {
                *e /= sum;
            }
        }
    }
    Vector::from_vec(out)
}

/// Per-layer gradient buffers matching a model's shapes.
struct Gradients {
    weight: Vec<Matrix>,
    bias: Vec<Vector>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weight: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            bias: model.layers.iter().map(|l| Vector::zeros(l.bias.len())).collect(),
        }
    }
}

/// Accumulates one example's loss gradients into `grads`.
fn backprop(model: &MlpModel, x: &[f32], label: usize, kind: LossKind, grads: &mut Gradients) -> Result<(), Error> {
    let trace = model.forward(x)?;
    let logits = trace.logits();
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, classes: logits.len() });
    }
    // dL/dz at the output: softmax - onehot.
    let mut dz = softmax_for_gradient(logits.as_slice(), kind);
    dz[label] -= 1.0;

    for l in (0..model.layers.len()).rev() {
        let layer_input: &[f32] = if l == 0 { x } else { trace.post[l - 1].as_slice() };
        grads.weight[l].add_outer(1.0, dz.as_slice(), layer_input);
        for (g, &d) in grads.bias[l].as_mut_slice().iter_mut().zip(dz.as_slice()) {
            *g += d;
        }
        if l > 0 {
            let mut da = model.layers[l].weight.matvec_t(dz.as_slice());
            if model.layers[l - 1].activation == Activation::Relu {
                for (d, &z) in da.as_mut_slice().iter_mut().zip(trace.pre[l - 1].as_slice()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dz = da;
        }
    }
    Ok(())
}

/// Trains a classifier with plain fixed-rate SGD.
///
/// Deterministic for a fixed seed: initialization and batch sampling both
/// derive from it. Training stops with an error at the first step that turns
/// any weight non-finite.
pub fn train_mlp(dataset: &Dataset, dims: &[usize], config: &MlpTrainConfig) -> Result<MlpModel, Error> {
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter { what: "cannot train on an empty dataset" });
    }
    if config.batch == 0 {
        return Err(Error::InvalidParameter { what: "batch size must be positive" });
    }
    if !(config.lr > 0.0) || !config.lr.is_finite() {
        return Err(Error::InvalidParameter { what: "learning rate must be positive and finite" });
    }
    if dims.first() != Some(&dataset.dim()) {
        return Err(Error::ShapeMismatch { expected: dataset.dim(), got: *dims.first().unwrap_or(&0) });
    }
    if dims.last() != Some(&dataset.classes) {
        return Err(Error::ShapeMismatch { expected: dataset.classes, got: *dims.last().unwrap_or(&0) });
    }

    let mut model = MlpModel::init(dims, dataset.range, config.seed)?;
    let mut rng = Rng::new(config.seed.wrapping_add(1));
    for step in 0..config.steps {
        let mut grads = Gradients::zeros_like(&model);
        for _ in 0..config.batch {
            let i = rng.index(dataset.len());
            backprop(&model, dataset.inputs[i].as_slice(), dataset.labels[i], config.loss, &mut grads)?;
        }
        let scale = config.lr / config.batch as f32;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            for (w, g) in layer.weight.as_mut_slice().iter_mut().zip(grads.weight[l].as_slice()) {
                *w -= scale * g;
            }
            for (b, g) in layer.bias.as_mut_slice().iter_mut().zip(grads.bias[l].as_slice()) {
                *b -= scale * g;
            }
        }
        if !model.all_finite() {
            return Err(Error::TrainingDiverged { step });
        }
    }
    Ok(model)
}

/// Fraction of examples whose argmax prediction matches the label.
pub fn accuracy(model: &MlpModel, dataset: &Dataset) -> Result<f64, Error> {
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter { what: "accuracy needs a non-empty dataset" });
    }
    let mut correct = 0usize;
    for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        let trace = model.forward(x.as_slice())?;
        if argmax(trace.logits().as_slice()) == Some(label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// The fuzz-facing wrapper around a trained classifier.
///
/// Depending on the experiment it exposes the naive loss (evaluated at the
/// model's own predicted class, since fuzzed inputs carry no labels) and/or
/// the half-precision twin's logits alongside the full-precision ones.
/// Coverage always comes from the full-precision path.
#[derive(Debug, Clone)]
pub struct MlpUnderTest {
    model: MlpModel,
    half_twin: Option<MlpModel>,
    truncate_activations: bool,
    coverage: CoverageLayer,
    with_unsafe_loss: bool,
}

impl MlpUnderTest {
    /// Wrapper for the non-finiteness hunt: metadata carries the naive loss.
    pub fn nan_hunter(model: MlpModel, coverage: CoverageLayer) -> Result<Self, Error> {
        Self::build(model, coverage, false, false, true)
    }

    /// Wrapper for the precision-disagreement hunt: metadata carries paired
    /// full- and half-precision logits.
    pub fn quant_pair(
        model: MlpModel,
        coverage: CoverageLayer,
        truncate_activations: bool,
    ) -> Result<Self, Error> {
        Self::build(model, coverage, true, truncate_activations, false)
    }

    fn build(
        model: MlpModel,
        coverage: CoverageLayer,
        with_twin: bool,
        truncate_activations: bool,
        with_unsafe_loss: bool,
    ) -> Result<Self, Error> {
        if coverage == CoverageLayer::HiddenState {
            return Err(Error::InvalidParameter {
                what: "hidden-state coverage applies to recurrent models only",
            });
        }
        let half_twin = if with_twin { Some(model.truncated()) } else { None };
        Ok(MlpUnderTest { model, half_twin, truncate_activations, coverage, with_unsafe_loss })
    }

    /// The wrapped full-precision model.
    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    fn coverage_vector(&self, x: &[f32], trace: &MlpTrace) -> Vector {
        match self.coverage {
            CoverageLayer::Logits => trace.logits().clone(),
            CoverageLayer::Penultimate => {
                let n = trace.post.len();
                if n >= 2 {
                    trace.post[n - 2].clone()
                } else {
                    // Single-layer model: the layer's input is the image.
                    Vector::from_vec(x.to_vec())
                }
            }
            CoverageLayer::HiddenState => unreachable!("rejected at construction"),
        }
    }
}

impl ModelUnderTest for MlpUnderTest {
    fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error> {
        let image = input
            .as_image()
            .ok_or(Error::InvalidParameter { what: "classifier evaluated on a text input" })?;
        let x = image.pixels.as_slice();
        let trace = self.model.forward(x)?;
        let coverage = self.coverage_vector(x, &trace);
        let logits = trace.logits();

        let loss = if self.with_unsafe_loss {
            let label = argmax(logits.as_slice())
                .ok_or(Error::InvalidParameter { what: "model emitted no logits" })?;
            Some(unsafe_cross_entropy(logits.as_slice(), label)?)
        } else {
            None
        };
        let logits_f16 = match &self.half_twin {
            Some(twin) => Some(twin.forward_truncated(x, self.truncate_activations)?),
            None => None,
        };
        Ok(Evaluation {
            coverage,
            metadata: Metadata {
                logits_f32: Some(logits.clone()),
                logits_f16,
                loss,
                sampled_text: None,
            },
        })
    }
}
