//! Character-level recurrent language model (LSTM).
//!
//! The model serves the text experiment: a fuzzed input is a *prime* string,
//! the coverage vector is the top layer's hidden state after the prime has
//! been consumed, and the metadata is a fixed-length continuation sampled
//! from the model. Sampling re-seeds its own generator on every call, so an
//! evaluation is a pure function of the prime — the whole point being that
//! coverage differences come from the input, not sampler noise.
//!
//! Gate layout everywhere is `[input, forget, cell, output]`, each block of
//! `hidden` width. Input weights are stored input-major (one row per input
//! unit), which turns the layer-0 one-hot multiply into a row lookup.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Evaluation, Metadata, ModelUnderTest};
use crate::math;
use crate::mutate::Payload;
use crate::rng::Rng;
use crate::tensor::{Matrix, Vector};
use crate::Error;

/// Ordered character set of a trained model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
}

impl Vocabulary {
    /// Collects the distinct characters of `text`, sorted.
    pub fn from_text(text: &str) -> Result<Self, Error> {
        let mut chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(Error::EmptyText);
        }
        chars.sort_unstable();
        chars.dedup();
        Ok(Vocabulary { chars })
    }

    /// Builds a vocabulary from an explicit, already-distinct character list.
    pub fn from_chars(mut chars: Vec<char>) -> Result<Self, Error> {
        if chars.is_empty() {
            return Err(Error::EmptyText);
        }
        chars.sort_unstable();
        chars.dedup();
        Ok(Vocabulary { chars })
    }

    /// Number of characters.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    /// True when the vocabulary is empty (never, for a constructed one).
    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// The characters in index order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Index of a character, if present.
    pub fn index_of(&self, ch: char) -> Option<usize> {
        self.chars.binary_search(&ch).ok()
    }

    /// Character at an index.
    pub fn char_at(&self, i: usize) -> char {
        self.chars[i]
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + math::expf(-x))
}

/// One recurrent layer's parameters.
#[derive(Debug, Clone, PartialEq)]
struct LstmLayer {
    /// Input weights, `input_dim x 4*hidden` (input-major).
    w_x: Matrix,
    /// Recurrent weights, `4*hidden x hidden`.
    w_h: Matrix,
    /// Gate biases, `4*hidden`.
    bias: Vector,
}

/// Per-layer recurrent state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    /// Hidden output.
    pub h: Vector,
    /// Cell memory.
    pub c: Vector,
}

/// Reference to a layer input: a one-hot character or a dense vector.
enum LayerInput<'a> {
    OneHot(usize),
    Dense(&'a [f32]),
}

/// The trained language model.
#[derive(Debug, Clone, PartialEq)]
pub struct CharRnnModel {
    vocab: Vocabulary,
    layers: Vec<LstmLayer>,
    /// Output projection, `vocab x hidden`.
    w_out: Matrix,
    b_out: Vector,
    hidden: usize,
}

impl CharRnnModel {
    /// Seeded random initialization. `layer_count` of 1 is the desk-scale
    /// default; 2 gives the stacked variant. Forget-gate biases start at 1
    /// (the usual trick to keep early memories alive).
    pub fn init(vocab: Vocabulary, hidden: usize, layer_count: usize, seed: u64) -> Result<Self, Error> {
        if hidden == 0 {
            return Err(Error::InvalidParameter { what: "hidden size must be positive" });
        }
        if layer_count == 0 {
            return Err(Error::InvalidParameter { what: "need at least one recurrent layer" });
        }
        let mut rng = Rng::new(seed);
        let v = vocab.len();
        let mut layers = Vec::with_capacity(layer_count);
        for l in 0..layer_count {
            let input_dim = if l == 0 { v } else { hidden };
            let mut w_x = Matrix::zeros(input_dim, 4 * hidden);
            w_x.fill_gaussian(1.0 / math::sqrtf(input_dim as f32), &mut rng);
            let mut w_h = Matrix::zeros(4 * hidden, hidden);
            w_h.fill_gaussian(1.0 / math::sqrtf(hidden as f32), &mut rng);
            let mut bias = Vector::zeros(4 * hidden);
            for b in &mut bias.as_mut_slice()[hidden..2 * hidden] {
                *b = 1.0;
            }
            layers.push(LstmLayer { w_x, w_h, bias });
        }
        let mut w_out = Matrix::zeros(v, hidden);
        w_out.fill_gaussian(1.0 / math::sqrtf(hidden as f32), &mut rng);
        Ok(CharRnnModel { vocab, layers, w_out, b_out: Vector::zeros(v), hidden })
    }

    /// The character set.
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Hidden width per layer.
    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Number of stacked recurrent layers.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Fresh all-zero state.
    pub fn zero_state(&self) -> Vec<LstmState> {
        (0..self.layers.len())
            .map(|_| LstmState { h: Vector::zeros(self.hidden), c: Vector::zeros(self.hidden) })
            .collect()
    }

    /// Gate pre-activations for one layer: `bias + W_x input + W_h h`.
    fn gate_preacts(&self, layer: &LstmLayer, input: &LayerInput<'_>, h: &Vector) -> Vector {
        let mut z = layer.bias.clone();
        match input {
            LayerInput::OneHot(c) => {
                for (zi, &w) in z.as_mut_slice().iter_mut().zip(layer.w_x.row(*c)) {
                    *zi += w;
                }
            }
            LayerInput::Dense(v) => {
                let contrib = layer.w_x.matvec_t(v);
                for (zi, &w) in z.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                    *zi += w;
                }
            }
        }
        let rec = layer.w_h.matvec(h.as_slice());
        for (zi, &w) in z.as_mut_slice().iter_mut().zip(rec.as_slice()) {
            *zi += w;
        }
        z
    }

    /// Advances all layers by one character, updating `state` in place.
    pub fn step(&self, state: &mut [LstmState], ch_index: usize) {
        debug_assert_eq!(state.len(), self.layers.len());
        let h_count = self.hidden;
        let mut lower_h: Option<Vector> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = match &lower_h {
                None => LayerInput::OneHot(ch_index),
                Some(h) => LayerInput::Dense(h.as_slice()),
            };
            let z = self.gate_preacts(layer, &input, &state[l].h);
            let z = z.as_slice();
            let mut h_new = Vector::zeros(h_count);
            let mut c_new = Vector::zeros(h_count);
            for k in 0..h_count {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h_count + k]);
                let g = math::tanhf(z[2 * h_count + k]);
                let o = sigmoid(z[3 * h_count + k]);
                let c = f * state[l].c[k] + i * g;
                c_new[k] = c;
                h_new[k] = o * math::tanhf(c);
            }
            state[l] = LstmState { h: h_new.clone(), c: c_new };
            lower_h = Some(h_new);
        }
    }

    /// Next-character logits from the current state.
    pub fn logits(&self, state: &[LstmState]) -> Vector {
        let top = &state[state.len() - 1].h;
        let mut logits = self.w_out.matvec(top.as_slice());
        for (l, &b) in logits.as_mut_slice().iter_mut().zip(self.b_out.as_slice()) {
            *l += b;
        }
        logits
    }

    /// Feeds a prime string through the model from a zero state.
    pub fn consume(&self, prime: &[char]) -> Result<Vec<LstmState>, Error> {
        if prime.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut state = self.zero_state();
        for &ch in prime {
            let idx = self.vocab.index_of(ch).ok_or(Error::OutOfVocabulary { ch })?;
            self.step(&mut state, idx);
        }
        Ok(state)
    }

    /// Consumes the prime, then samples `length` characters from the softmax
    /// over the logits (temperature 1), using a sampler re-seeded to
    /// `sample_seed` at the start of every call.
    ///
    /// Returns the sampled text and the top-layer hidden state right after
    /// the prime — the coverage vector of the text experiment.
    pub fn sample(
        &self,
        prime: &[char],
        length: usize,
        sample_seed: u64,
    ) -> Result<(String, Vector), Error> {
        let mut state = self.consume(prime)?;
        let coverage = state[state.len() - 1].h.clone();
        let mut sampler = Rng::new(sample_seed);
        let mut out = String::with_capacity(length);
        for _ in 0..length {
            let logits = self.logits(&state);
            let idx = sample_index(logits.as_slice(), &mut sampler);
            out.push(self.vocab.char_at(idx));
            self.step(&mut state, idx);
        }
        Ok((out, coverage))
    }

    /// True when every parameter is finite.
    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w_x.all_finite() && l.w_h.all_finite() && l.bias.all_finite())
            && self.w_out.all_finite()
            && self.b_out.all_finite()
    }

    /// Copies every parameter out, for serialization.
    pub fn to_parts(&self) -> CharRnnParts {
        CharRnnParts {
            vocab: self.vocab.chars().to_vec(),
            hidden: self.hidden,
            input_weights: self.layers.iter().map(|l| l.w_x.clone()).collect(),
            recurrent_weights: self.layers.iter().map(|l| l.w_h.clone()).collect(),
            gate_biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
            output_weight: self.w_out.clone(),
            output_bias: self.b_out.clone(),
        }
    }

    /// Rebuilds a model from serialized parameters, validating every shape.
    pub fn from_parts(parts: CharRnnParts) -> Result<Self, Error> {
        let vocab = Vocabulary::from_chars(parts.vocab)?;
        let h = parts.hidden;
        if h == 0 {
            return Err(Error::InvalidParameter { what: "hidden size must be positive" });
        }
        let layer_count = parts.input_weights.len();
        if layer_count == 0
            || parts.recurrent_weights.len() != layer_count
            || parts.gate_biases.len() != layer_count
        {
            return Err(Error::InvalidParameter { what: "layer parameter lists disagree" });
        }
        let v = vocab.len();
        let mut layers = Vec::with_capacity(layer_count);
        for (l, ((w_x, w_h), bias)) in parts
            .input_weights
            .into_iter()
            .zip(parts.recurrent_weights)
            .zip(parts.gate_biases)
            .enumerate()
        {
            let expect_rows = if l == 0 { v } else { h };
            let shape_ok = w_x.rows() == expect_rows
                && w_x.cols() == 4 * h
                && w_h.rows() == 4 * h
                && w_h.cols() == h
                && bias.len() == 4 * h;
            if !shape_ok {
                return Err(Error::InvalidParameter { what: "recurrent layer shapes disagree" });
            }
            layers.push(LstmLayer { w_x, w_h, bias });
        }
        if parts.output_weight.rows() != v
            || parts.output_weight.cols() != h
            || parts.output_bias.len() != v
        {
            return Err(Error::InvalidParameter { what: "output projection shape disagrees" });
        }
        Ok(CharRnnModel {
            vocab,
            layers,
            w_out: parts.output_weight,
            b_out: parts.output_bias,
            hidden: h,
        })
    }
}

/// A language model's parameters, flattened for serialization.
///
/// Gate blocks inside each `4*hidden`-wide tensor follow the fixed order
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct CharRnnParts {
    /// Vocabulary characters in index order.
    pub vocab: Vec<char>,
    /// Hidden width per layer.
    pub hidden: usize,
    /// Per-layer input weights (`input_dim x 4*hidden`, input-major).
    pub input_weights: Vec<Matrix>,
    /// Per-layer recurrent weights (`4*hidden x hidden`).
    pub recurrent_weights: Vec<Matrix>,
    /// Per-layer gate biases (`4*hidden`).
    pub gate_biases: Vec<Vector>,
    /// Output projection (`vocab x hidden`).
    pub output_weight: Matrix,
    /// Output bias (`vocab`).
    pub output_bias: Vector,
}

/// Draws an index from the softmax over `logits` (max-subtracted, so always
/// a valid distribution for finite logits).
fn sample_index(logits: &[f32], rng: &mut Rng) -> usize {
    let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| if b > a { b } else { a });
    let mut weights = Vec::with_capacity(logits.len());
    let mut total = 0.0f64;
    for &z in logits {
        let w = math::exp((z - max) as f64);
        weights.push(w);
        total += w;
    }
    let mut u = rng.uniform() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    logits.len() - 1
}

/// Trainer settings for the language model.
#[derive(Debug, Clone, PartialEq)]
pub struct CharRnnTrainConfig {
    /// Hidden width per layer.
    pub hidden: usize,
    /// Stacked recurrent layers (1 at desk scale; 2 supported).
    pub layers: usize,
    /// SGD steps.
    pub steps: usize,
    /// Characters per training window.
    pub seq_len: usize,
    /// Windows per step.
    pub batch: usize,
    /// Fixed learning rate.
    pub lr: f32,
    /// Elementwise gradient clip bound.
    pub grad_clip: f32,
    /// Seed for initialization and window sampling.
    pub seed: u64,
}

/// Flat gradient buffers matching a model's parameters.
struct RnnGradients {
    w_x: Vec<Matrix>,
    w_h: Vec<Matrix>,
    bias: Vec<Vector>,
    w_out: Matrix,
    b_out: Vector,
}

impl RnnGradients {
    fn zeros_like(model: &CharRnnModel) -> Self {
        RnnGradients {
            w_x: model.layers.iter().map(|l| Matrix::zeros(l.w_x.rows(), l.w_x.cols())).collect(),
            w_h: model.layers.iter().map(|l| Matrix::zeros(l.w_h.rows(), l.w_h.cols())).collect(),
            bias: model.layers.iter().map(|l| Vector::zeros(l.bias.len())).collect(),
            w_out: Matrix::zeros(model.w_out.rows(), model.w_out.cols()),
            b_out: Vector::zeros(model.b_out.len()),
        }
    }
}

/// Everything the backward pass needs about one time step of one layer.
struct StepCache {
    /// Layer input: a character index for layer 0, otherwise the lower
    /// layer's hidden output.
    input: LayerInputOwned,
    h_prev: Vector,
    c_prev: Vector,
    /// Post-activation gates `[i, f, g, o]`, concatenated.
    gates: Vector,
    tanh_c: Vector,
}

enum LayerInputOwned {
    OneHot(usize),
    Dense(Vector),
}

/// Forward pass over a window, returning per-layer per-step caches and the
/// per-step top hidden states.
fn forward_window(
    model: &CharRnnModel,
    inputs: &[usize],
) -> (Vec<Vec<StepCache>>, Vec<Vector>) {
    let h_count = model.hidden;
    let mut state = model.zero_state();
    let mut caches: Vec<Vec<StepCache>> = (0..model.layers.len()).map(|_| Vec::new()).collect();
    let mut tops = Vec::with_capacity(inputs.len());
    for &ch in inputs {
        let mut lower_h: Option<Vector> = None;
        for (l, layer) in model.layers.iter().enumerate() {
            let input_ref = match &lower_h {
                None => LayerInput::OneHot(ch),
                Some(h) => LayerInput::Dense(h.as_slice()),
            };
            let z = model.gate_preacts(layer, &input_ref, &state[l].h);
            let z = z.as_slice();
            let mut gates = Vector::zeros(4 * h_count);
            let mut c_new = Vector::zeros(h_count);
            let mut tanh_c = Vector::zeros(h_count);
            let mut h_new = Vector::zeros(h_count);
            for k in 0..h_count {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h_count + k]);
                let g = math::tanhf(z[2 * h_count + k]);
                let o = sigmoid(z[3 * h_count + k]);
                gates[k] = i;
                gates[h_count + k] = f;
                gates[2 * h_count + k] = g;
                gates[3 * h_count + k] = o;
                let c = f * state[l].c[k] + i * g;
                c_new[k] = c;
                let tc = math::tanhf(c);
                tanh_c[k] = tc;
                h_new[k] = o * tc;
            }
            caches[l].push(StepCache {
                input: match lower_h.take() {
                    None => LayerInputOwned::OneHot(ch),
                    Some(h) => LayerInputOwned::Dense(h),
                },
                h_prev: state[l].h.clone(),
                c_prev: state[l].c.clone(),
                gates,
                tanh_c,
            });
            state[l] = LstmState { h: h_new.clone(), c: c_new };
            lower_h = Some(h_new);
        }
        tops.push(state[state.len() - 1].h.clone());
    }
    (caches, tops)
}

/// Backpropagation through time over one window; accumulates into `grads`
/// and returns the window's summed stable cross-entropy.
fn backward_window(
    model: &CharRnnModel,
    inputs: &[usize],
    targets: &[usize],
    grads: &mut RnnGradients,
) -> f64 {
    let h_count = model.hidden;
    let layer_count = model.layers.len();
    let (caches, tops) = forward_window(model, inputs);

    let mut loss = 0.0f64;
    let mut dh_next: Vec<Vector> = (0..layer_count).map(|_| Vector::zeros(h_count)).collect();
    let mut dc_next: Vec<Vector> = (0..layer_count).map(|_| Vector::zeros(h_count)).collect();

    for t in (0..inputs.len()).rev() {
        // Output layer: softmax cross-entropy against the next character.
        let mut logits = model.w_out.matvec(tops[t].as_slice());
        for (l, &b) in logits.as_mut_slice().iter_mut().zip(model.b_out.as_slice()) {
            *l += b;
        }
        loss += super::safe_cross_entropy(logits.as_slice(), targets[t]).expect("target in vocab");
        let max = logits.as_slice().iter().fold(f32::NEG_INFINITY, |a, &b| if b > a { b } else { a });
        let mut dlogit = Vector::zeros(logits.len());
        let mut sum = 0.0f32;
        for (d, &z) in dlogit.as_mut_slice().iter_mut().zip(logits.as_slice()) {
            *d = math::expf(z - max);
            sum += *d;
        }
        for d in dlogit.as_mut_slice() {
            *d /= sum;
        }
        dlogit[targets[t]] -= 1.0;

        grads.w_out.add_outer(1.0, dlogit.as_slice(), tops[t].as_slice());
        for (g, &d) in grads.b_out.as_mut_slice().iter_mut().zip(dlogit.as_slice()) {
            *g += d;
        }
        let from_output = model.w_out.matvec_t(dlogit.as_slice());
        for (dh, &d) in dh_next[layer_count - 1].as_mut_slice().iter_mut().zip(from_output.as_slice()) {
            *dh += d;
        }

        // Walk layers top-down so the lower layer sees the input gradient
        // its upper neighbor produced at this same step.
        let mut dinput_for_lower: Option<Vector> = None;
        for l in (0..layer_count).rev() {
            let cache = &caches[l][t];
            let mut dh = core::mem::replace(&mut dh_next[l], Vector::zeros(h_count));
            if let Some(di) = dinput_for_lower.take() {
                for (a, &b) in dh.as_mut_slice().iter_mut().zip(di.as_slice()) {
                    *a += b;
                }
            }
            let dc_in = core::mem::replace(&mut dc_next[l], Vector::zeros(h_count));

            let gates = cache.gates.as_slice();
            let mut dz = Vector::zeros(4 * h_count);
            let mut dc_prev = Vector::zeros(h_count);
            for k in 0..h_count {
                let i = gates[k];
                let f = gates[h_count + k];
                let g = gates[2 * h_count + k];
                let o = gates[3 * h_count + k];
                let tc = cache.tanh_c[k];

                let do_ = dh[k] * tc;
                let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
                let di = dc * g;
                let df = dc * cache.c_prev[k];
                let dg = dc * i;
                dc_prev[k] = dc * f;

                dz[k] = di * i * (1.0 - i);
                dz[h_count + k] = df * f * (1.0 - f);
                dz[2 * h_count + k] = dg * (1.0 - g * g);
                dz[3 * h_count + k] = do_ * o * (1.0 - o);
            }

            for (g, &d) in grads.bias[l].as_mut_slice().iter_mut().zip(dz.as_slice()) {
                *g += d;
            }
            grads.w_h[l].add_outer(1.0, dz.as_slice(), cache.h_prev.as_slice());
            match &cache.input {
                LayerInputOwned::OneHot(c) => {
                    for (g, &d) in grads.w_x[l].row_mut(*c).iter_mut().zip(dz.as_slice()) {
                        *g += d;
                    }
                }
                LayerInputOwned::Dense(v) => {
                    grads.w_x[l].add_outer(1.0, v.as_slice(), dz.as_slice());
                    dinput_for_lower = Some(model.layers[l].w_x.matvec(dz.as_slice()));
                }
            }

            dh_next[l] = model.layers[l].w_h.matvec_t(dz.as_slice());
            dc_next[l] = dc_prev;
        }
    }
    loss
}

/// Trains a language model on a text corpus with plain SGD and elementwise
/// gradient clipping.
///
/// The vocabulary is the corpus's character set. Deterministic per seed;
/// non-finite weights abort with the offending step.
pub fn train_char_rnn(text: &str, config: &CharRnnTrainConfig) -> Result<CharRnnModel, Error> {
    if config.seq_len == 0 || config.batch == 0 {
        return Err(Error::InvalidParameter { what: "window length and batch must be positive" });
    }
    if !(config.lr > 0.0) || !config.lr.is_finite() {
        return Err(Error::InvalidParameter { what: "learning rate must be positive and finite" });
    }
    if !(config.grad_clip > 0.0) {
        return Err(Error::InvalidParameter { what: "gradient clip bound must be positive" });
    }
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < config.seq_len + 2 {
        return Err(Error::InvalidParameter { what: "training text shorter than one window" });
    }
    let vocab = Vocabulary::from_text(text)?;
    let indexed: Vec<usize> =
        chars.iter().map(|&c| vocab.index_of(c).expect("char from the same text")).collect();

    let mut model = CharRnnModel::init(vocab, config.hidden, config.layers, config.seed)?;
    let mut rng = Rng::new(config.seed.wrapping_add(1));
    let window_starts = indexed.len() - config.seq_len - 1;

    for step in 0..config.steps {
        let mut grads = RnnGradients::zeros_like(&model);
        for _ in 0..config.batch {
            let start = rng.index(window_starts);
            let inputs = &indexed[start..start + config.seq_len];
            let targets = &indexed[start + 1..start + config.seq_len + 1];
            backward_window(&model, inputs, targets, &mut grads);
        }
        let scale = 1.0 / (config.batch * config.seq_len) as f32;
        let clip = config.grad_clip;
        let lr = config.lr;
        let apply = |param: &mut [f32], grad: &[f32]| {
            for (p, &g) in param.iter_mut().zip(grad) {
                let g = (g * scale).clamp(-clip, clip);
                *p -= lr * g;
            }
        };
        for (l, layer) in model.layers.iter_mut().enumerate() {
            apply(layer.w_x.as_mut_slice(), grads.w_x[l].as_slice());
            apply(layer.w_h.as_mut_slice(), grads.w_h[l].as_slice());
            apply(layer.bias.as_mut_slice(), grads.bias[l].as_slice());
        }
        apply(model.w_out.as_mut_slice(), grads.w_out.as_slice());
        apply(model.b_out.as_mut_slice(), grads.b_out.as_slice());

        if !model.all_finite() {
            return Err(Error::TrainingDiverged { step });
        }
    }
    Ok(model)
}

/// Mean next-character cross-entropy over consecutive windows of `text`,
/// evaluated from a fresh state per window. Deterministic; used to compare
/// models before and after training.
pub fn mean_loss(model: &CharRnnModel, text: &str, seq_len: usize) -> Result<f64, Error> {
    if seq_len == 0 {
        return Err(Error::InvalidParameter { what: "window length must be positive" });
    }
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < 2 {
        return Err(Error::InvalidParameter { what: "evaluation text shorter than two characters" });
    }
    let indexed: Vec<usize> = chars
        .iter()
        .map(|&c| model.vocab.index_of(c).ok_or(Error::OutOfVocabulary { ch: c }))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut start = 0;
    while start + 1 < indexed.len() {
        let end = (start + seq_len).min(indexed.len() - 1);
        let mut state = model.zero_state();
        for t in start..end {
            model.step(&mut state, indexed[t]);
            let logits = model.logits(&state);
            total += super::safe_cross_entropy(logits.as_slice(), indexed[t + 1])?;
            count += 1;
        }
        start = end;
    }
    Ok(total / count as f64)
}

/// The fuzz-facing wrapper: prime in, sampled continuation out.
#[derive(Debug, Clone)]
pub struct CharRnnUnderTest {
    model: CharRnnModel,
    sample_length: usize,
    sample_seed: u64,
}

impl CharRnnUnderTest {
    /// Wraps a model with a fixed continuation length and sampling seed.
    pub fn new(model: CharRnnModel, sample_length: usize, sample_seed: u64) -> Self {
        CharRnnUnderTest { model, sample_length, sample_seed }
    }

    /// The wrapped model.
    pub fn model(&self) -> &CharRnnModel {
        &self.model
    }
}

impl ModelUnderTest for CharRnnUnderTest {
    fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error> {
        let text = input
            .as_text()
            .ok_or(Error::InvalidParameter { what: "language model evaluated on an image input" })?;
        let (sampled, hidden) = self.model.sample(&text.chars, self.sample_length, self.sample_seed)?;
        Ok(Evaluation {
            coverage: hidden,
            metadata: Metadata {
                logits_f32: None,
                logits_f16: None,
                loss: None,
                sampled_text: Some(sampled),
            },
        })
    }
}
