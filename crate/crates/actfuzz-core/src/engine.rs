//! The fuzzing loop: corpus, input chooser, and campaign drivers.
//!
//! A campaign starts from seed inputs, repeatedly picks a corpus element,
//! mutates it, evaluates the mutant on the model, and keeps the mutant when
//! its coverage vector lands outside the novelty threshold of everything
//! seen so far. Inputs satisfying the objective are surfaced as test cases
//! regardless of novelty. [`random_search`] is the unguided control: same
//! mutation and objective machinery, but parents come uniformly from the
//! original seeds and the corpus never grows.
//!
//! Batches are processed against the coverage index as frozen at batch
//! start: all novelty decisions in a batch compare against the same stored
//! set, then the new elements are appended in batch order. Two mutants of
//! the same batch that land near each other therefore both enter the
//! corpus, which is deliberate — with a nondeterministic or stateful model
//! the same payload can legitimately cover two different regions.

use alloc::vec::Vec;

use crate::coverage::CoverageIndex;
use crate::math;
use crate::models::{Evaluation, Metadata, ModelUnderTest};
use crate::mutate::{Mutator, Payload};
use crate::objective::Objective;
use crate::rng::Rng;
use crate::Error;

/// How the next parent is drawn from the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChooserMode {
    /// Weight element `k` by `exp(t_k - t)`: recently added inputs are
    /// strongly preferred, older ones decay exponentially. When every
    /// weight underflows to zero the draw falls back to uniform.
    Recency,
    /// Every corpus element is equally likely.
    Uniform,
}

/// Campaign settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzConfig {
    /// Number of mutation iterations to run.
    pub iterations: u64,
    /// Mutants evaluated per iteration.
    pub batch: usize,
    /// Parent selection policy.
    pub chooser: ChooserMode,
    /// Stop the campaign as soon as one test case is found.
    pub stop_on_first: bool,
    /// Draw one parent per iteration and mutate it `batch` times, instead
    /// of drawing an independent parent per mutant.
    pub single_parent_batch: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            iterations: 1000,
            batch: 1,
            chooser: ChooserMode::Recency,
            stop_on_first: false,
            single_parent_batch: false,
        }
    }
}

impl FuzzConfig {
    /// Rejects empty campaigns.
    pub fn validate(&self) -> Result<(), Error> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter { what: "iteration count must be at least 1" });
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter { what: "batch size must be at least 1" });
        }
        Ok(())
    }
}

/// One corpus element and its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRecord {
    /// Position in the corpus; stable for the life of the campaign.
    pub id: usize,
    /// The input itself.
    pub payload: Payload,
    /// The original seed this element descends from (a seed's ancestor is
    /// itself). Ball-constrained mutation measures distance to this record.
    pub seed_ancestor_id: usize,
    /// The direct parent, absent for seeds.
    pub parent_id: Option<usize>,
    /// Iteration counter value when the element was added; seeds carry 0.
    pub t_k: u64,
}

/// The growing set of retained inputs.
///
/// Append-only: ids are indices, nothing is ever removed, and the same
/// payload may appear more than once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    records: Vec<InputRecord>,
    iteration: u64,
}

impl Corpus {
    /// Builds a corpus from seed payloads at iteration 0.
    pub fn from_seeds(seeds: &[Payload]) -> Result<Self, Error> {
        if seeds.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let records = seeds
            .iter()
            .enumerate()
            .map(|(id, payload)| InputRecord {
                id,
                payload: payload.clone(),
                seed_ancestor_id: id,
                parent_id: None,
                t_k: 0,
            })
            .collect();
        Ok(Corpus { records, iteration: 0 })
    }

    /// Reassembles a corpus from persisted records, e.g. when reporting on
    /// a finished campaign.
    pub fn from_parts(records: Vec<InputRecord>, iteration: u64) -> Result<Self, Error> {
        for (i, r) in records.iter().enumerate() {
            let lineage_ok = r.id == i
                && r.seed_ancestor_id < records.len()
                && r.parent_id.map_or(true, |p| p < i)
                && r.t_k <= iteration;
            if !lineage_ok {
                return Err(Error::InvalidParameter { what: "corpus records have broken lineage" });
            }
        }
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { records, iteration })
    }

    /// All records, in insertion order.
    pub fn records(&self) -> &[InputRecord] {
        &self.records
    }

    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false for a constructed corpus.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The record with a given id.
    pub fn get(&self, id: usize) -> &InputRecord {
        &self.records[id]
    }

    /// The latest executed iteration.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    fn push(&mut self, payload: Payload, parent_id: usize, t_k: u64) -> usize {
        let id = self.records.len();
        let seed_ancestor_id = self.records[parent_id].seed_ancestor_id;
        self.records.push(InputRecord {
            id,
            payload,
            seed_ancestor_id,
            parent_id: Some(parent_id),
            t_k,
        });
        id
    }
}

/// An input that satisfied the objective, with the evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    /// The offending input.
    pub payload: Payload,
    /// The model's metadata for it, as seen when the objective fired.
    pub metadata: Metadata,
    /// Name of the objective that fired.
    pub objective: &'static str,
    /// Iteration at which it was found.
    pub iteration: u64,
}

/// One progress sample, taken after an iteration finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// The iteration just executed (1-based).
    pub iteration: u64,
    /// Corpus size after the iteration's insertions.
    pub corpus_size: usize,
    /// Cumulative test cases found so far.
    pub testcases: usize,
}

/// Per-iteration progress log of a campaign.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// One row per executed iteration, in order. A campaign stopped by
    /// `stop_on_first` ends with a row for the partially processed
    /// iteration.
    pub rows: Vec<TraceRow>,
}

/// Everything a finished campaign produced.
#[derive(Debug, Clone)]
pub struct FuzzOutcome {
    /// The final corpus, seeds included.
    pub corpus: Corpus,
    /// Objective hits, in discovery order.
    pub test_cases: Vec<TestCase>,
    /// Per-iteration progress.
    pub trace: Trace,
    /// The coverage index as the campaign left it.
    pub index: CoverageIndex,
}

/// Why a campaign could not finish.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    /// Configuration or seeds were rejected before any evaluation.
    Setup(Error),
    /// Mutating or evaluating an input failed mid-campaign. Carries the
    /// offending payload so the driver can persist it for diagnosis;
    /// iteration 0 means the failure happened while registering seeds.
    InputFailure {
        /// Iteration during which the failure occurred.
        iteration: u64,
        /// The input that could not be processed.
        payload: Payload,
        /// The underlying error.
        source: Error,
    },
}

impl core::fmt::Display for EngineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EngineError::Setup(e) => write!(f, "campaign setup rejected: {e}"),
            EngineError::InputFailure { iteration, source, .. } => {
                write!(f, "input processing failed at iteration {iteration}: {source}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EngineError {}

impl From<Error> for EngineError {
    fn from(e: Error) -> Self {
        EngineError::Setup(e)
    }
}

/// Unnormalized chooser weights for a corpus snapshot at iteration `t`.
///
/// Recency mode weights element `k` by `exp(t_k - t)`; since `t_k <= t`
/// every weight is at most 1, and a corpus whose members are all much older
/// than `t` can underflow entirely — the caller treats an all-zero result
/// as uniform.
pub fn selection_weights(records: &[InputRecord], t: u64, mode: ChooserMode) -> Vec<f64> {
    match mode {
        ChooserMode::Uniform => records.iter().map(|_| 1.0).collect(),
        ChooserMode::Recency => records
            .iter()
            .map(|r| {
                debug_assert!(r.t_k <= t);
                math::exp(r.t_k as f64 - t as f64)
            })
            .collect(),
    }
}

/// Draws an index proportionally to `weights`, falling back to uniform
/// when the weights sum to zero (or fail to be finite).
pub fn sample_weighted(weights: &[f64], rng: &mut Rng) -> usize {
    debug_assert!(!weights.is_empty());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.index(weights.len());
    }
    let mut u = rng.uniform() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Evaluates an input, tagging any failure with the campaign position.
fn evaluate_or_abort(
    model: &dyn ModelUnderTest,
    payload: &Payload,
    iteration: u64,
) -> Result<Evaluation, EngineError> {
    model.evaluate(payload).map_err(|source| EngineError::InputFailure {
        iteration,
        payload: payload.clone(),
        source,
    })
}

/// Runs a coverage-guided campaign.
///
/// Seeds are evaluated and registered in the index unconditionally (no
/// novelty or objective check) before the first iteration. Each iteration
/// then snapshots the chooser weights, draws parents, mutates, evaluates
/// the batch, decides novelty for the whole batch against the frozen
/// index, and finally appends the new elements and checks the objective in
/// batch order. The caller supplies the index (already calibrated and
/// possibly scaled) and the campaign seed; everything downstream is
/// deterministic in those plus the model.
pub fn fuzz(
    model: &dyn ModelUnderTest,
    seeds: &[Payload],
    mutator: &dyn Mutator,
    objective: &dyn Objective,
    mut index: CoverageIndex,
    config: &FuzzConfig,
    seed: u64,
) -> Result<FuzzOutcome, EngineError> {
    config.validate()?;
    let mut corpus = Corpus::from_seeds(seeds)?;
    let mut rng = Rng::new(seed);
    let mut test_cases: Vec<TestCase> = Vec::new();
    let mut trace = Trace::default();

    for record in corpus.records() {
        let eval = evaluate_or_abort(model, &record.payload, 0)?;
        index.insert(eval.coverage.as_slice()).map_err(|source| EngineError::InputFailure {
            iteration: 0,
            payload: record.payload.clone(),
            source,
        })?;
    }

    'campaign: for t in 1..=config.iterations {
        corpus.iteration = t;
        let weights = selection_weights(corpus.records(), t, config.chooser);
        let parent_ids: Vec<usize> = if config.single_parent_batch {
            let p = sample_weighted(&weights, &mut rng);
            (0..config.batch).map(|_| p).collect()
        } else {
            (0..config.batch).map(|_| sample_weighted(&weights, &mut rng)).collect()
        };

        let mut mutants = Vec::with_capacity(config.batch);
        for &pid in &parent_ids {
            let parent = corpus.get(pid);
            let ancestor = &corpus.get(parent.seed_ancestor_id).payload;
            let mutant = mutator.mutate(&parent.payload, ancestor, &mut rng).map_err(|source| {
                EngineError::InputFailure { iteration: t, payload: parent.payload.clone(), source }
            })?;
            mutants.push(mutant);
        }

        let mut evals = Vec::with_capacity(config.batch);
        for m in &mutants {
            evals.push(evaluate_or_abort(model, m, t)?);
        }

        // All novelty decisions compare against the index as of batch start.
        let mut is_new = Vec::with_capacity(config.batch);
        for (m, e) in mutants.iter().zip(&evals) {
            let novelty = index.probe(e.coverage.as_slice()).map_err(|source| {
                EngineError::InputFailure { iteration: t, payload: m.clone(), source }
            })?;
            is_new.push(novelty.is_new);
        }

        for (i, (mutant, eval)) in mutants.into_iter().zip(evals).enumerate() {
            if is_new[i] {
                let id = corpus.push(mutant.clone(), parent_ids[i], t);
                let index_id =
                    index.insert(eval.coverage.as_slice()).map_err(|source| {
                        EngineError::InputFailure { iteration: t, payload: mutant.clone(), source }
                    })?;
                debug_assert_eq!(index_id, id, "corpus and index ids stay aligned");
            }
            if objective.check(&eval.metadata) {
                test_cases.push(TestCase {
                    payload: mutant,
                    metadata: eval.metadata,
                    objective: objective.name(),
                    iteration: t,
                });
                if config.stop_on_first {
                    trace.rows.push(TraceRow {
                        iteration: t,
                        corpus_size: corpus.len(),
                        testcases: test_cases.len(),
                    });
                    break 'campaign;
                }
            }
        }

        trace.rows.push(TraceRow {
            iteration: t,
            corpus_size: corpus.len(),
            testcases: test_cases.len(),
        });
    }

    Ok(FuzzOutcome { corpus, test_cases, trace, index })
}

/// Runs the unguided control campaign.
///
/// Identical mutation, evaluation, and objective machinery, but parents are
/// drawn uniformly from the original seeds, nothing is added to the corpus
/// or the index, and the trace's corpus size stays at the seed count. Used
/// to measure what coverage guidance buys.
pub fn random_search(
    model: &dyn ModelUnderTest,
    seeds: &[Payload],
    mutator: &dyn Mutator,
    objective: &dyn Objective,
    index: CoverageIndex,
    config: &FuzzConfig,
    seed: u64,
) -> Result<FuzzOutcome, EngineError> {
    config.validate()?;
    let mut corpus = Corpus::from_seeds(seeds)?;
    let mut rng = Rng::new(seed);
    let mut test_cases: Vec<TestCase> = Vec::new();
    let mut trace = Trace::default();

    'campaign: for t in 1..=config.iterations {
        corpus.iteration = t;
        let parent_ids: Vec<usize> = if config.single_parent_batch {
            let p = rng.index(corpus.len());
            (0..config.batch).map(|_| p).collect()
        } else {
            (0..config.batch).map(|_| rng.index(corpus.len())).collect()
        };

        for &pid in &parent_ids {
            let parent = corpus.get(pid);
            let ancestor = &corpus.get(parent.seed_ancestor_id).payload;
            let mutant = mutator.mutate(&parent.payload, ancestor, &mut rng).map_err(|source| {
                EngineError::InputFailure { iteration: t, payload: parent.payload.clone(), source }
            })?;
            let eval = evaluate_or_abort(model, &mutant, t)?;
            if objective.check(&eval.metadata) {
                test_cases.push(TestCase {
                    payload: mutant,
                    metadata: eval.metadata,
                    objective: objective.name(),
                    iteration: t,
                });
                if config.stop_on_first {
                    trace.rows.push(TraceRow {
                        iteration: t,
                        corpus_size: corpus.len(),
                        testcases: test_cases.len(),
                    });
                    break 'campaign;
                }
            }
        }

        trace.rows.push(TraceRow {
            iteration: t,
            corpus_size: corpus.len(),
            testcases: test_cases.len(),
        });
    }

    Ok(FuzzOutcome { corpus, test_cases, trace, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutate::{ImageInput, TextInput};
    use crate::tensor::Vector;
    use core::cell::Cell;

    /// Coverage is the input's own pixels; metadata echoes them as logits.
    struct EchoModel;

    impl ModelUnderTest for EchoModel {
        fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error> {
            let image = input.as_image().ok_or(Error::InvalidParameter { what: "image only" })?;
            Ok(Evaluation {
                coverage: image.pixels.clone(),
                metadata: Metadata {
                    logits_f32: Some(image.pixels.clone()),
                    ..Metadata::default()
                },
            })
        }
    }

    /// Coverage moves 100 units further out on every call, regardless of
    /// the input — a stand-in for a model whose activations keep changing.
    struct DriftModel {
        calls: Cell<u32>,
    }

    impl DriftModel {
        fn new() -> Self {
            DriftModel { calls: Cell::new(0) }
        }
    }

    impl ModelUnderTest for DriftModel {
        fn evaluate(&self, _input: &Payload) -> Result<Evaluation, Error> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            Ok(Evaluation {
                coverage: Vector::from_vec(vec![100.0 * n as f32]),
                metadata: Metadata::default(),
            })
        }
    }

    /// Fails on every call after the first `allowed`.
    struct FailingModel {
        allowed: u32,
        calls: Cell<u32>,
    }

    impl ModelUnderTest for FailingModel {
        fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            if n >= self.allowed {
                return Err(Error::TrainingDiverged { step: n as usize });
            }
            EchoModel.evaluate(input)
        }
    }

    /// Returns the parent unchanged.
    struct IdentityMutator;

    impl Mutator for IdentityMutator {
        fn mutate(&self, parent: &Payload, _a: &Payload, _rng: &mut Rng) -> Result<Payload, Error> {
            Ok(parent.clone())
        }
    }

    /// Records every parent it is handed.
    struct RecordingMutator {
        seen: core::cell::RefCell<Vec<Payload>>,
    }

    impl Mutator for RecordingMutator {
        fn mutate(&self, parent: &Payload, _a: &Payload, _rng: &mut Rng) -> Result<Payload, Error> {
            self.seen.borrow_mut().push(parent.clone());
            Ok(parent.clone())
        }
    }

    struct Never;
    impl Objective for Never {
        fn name(&self) -> &'static str {
            "never"
        }
        fn check(&self, _m: &Metadata) -> bool {
            false
        }
    }

    struct Always;
    impl Objective for Always {
        fn name(&self) -> &'static str {
            "always"
        }
        fn check(&self, _m: &Metadata) -> bool {
            true
        }
    }

    fn image(values: &[f32]) -> Payload {
        Payload::Image(ImageInput::new(Vector::from_vec(values.to_vec())))
    }

    fn config(iterations: u64, batch: usize) -> FuzzConfig {
        FuzzConfig { iterations, batch, ..FuzzConfig::default() }
    }

    #[test]
    fn recency_weights_match_the_closed_form() {
        let corpus = Corpus::from_seeds(&[image(&[0.0])]).unwrap();
        let mut records = corpus.records().to_vec();
        records.push(InputRecord {
            id: 1,
            payload: image(&[1.0]),
            seed_ancestor_id: 0,
            parent_id: Some(0),
            t_k: 1,
        });
        let w = selection_weights(&records, 1, ChooserMode::Recency);
        let p0 = w[0] / (w[0] + w[1]);
        let p1 = w[1] / (w[0] + w[1]);
        assert!((p0 - 0.2689).abs() < 1e-3, "p0 = {p0}");
        assert!((p1 - 0.7311).abs() < 1e-3, "p1 = {p1}");
    }

    #[test]
    fn recency_sampling_matches_the_distribution_empirically() {
        let records = vec![
            InputRecord {
                id: 0,
                payload: image(&[0.0]),
                seed_ancestor_id: 0,
                parent_id: None,
                t_k: 0,
            },
            InputRecord {
                id: 1,
                payload: image(&[1.0]),
                seed_ancestor_id: 0,
                parent_id: Some(0),
                t_k: 1,
            },
        ];
        let weights = selection_weights(&records, 1, ChooserMode::Recency);
        let mut rng = Rng::new(7);
        let draws = 100_000;
        let mut hits = [0u32; 2];
        for _ in 0..draws {
            hits[sample_weighted(&weights, &mut rng)] += 1;
        }
        let p1 = hits[1] as f64 / draws as f64;
        assert!((p1 - 0.7311).abs() < 0.01, "empirical p1 = {p1}");
    }

    #[test]
    fn equal_ages_are_drawn_evenly() {
        let corpus = Corpus::from_seeds(&[image(&[0.0]), image(&[1.0])]).unwrap();
        let weights = selection_weights(corpus.records(), 0, ChooserMode::Recency);
        let mut rng = Rng::new(11);
        let mut hits = [0u32; 2];
        for _ in 0..100_000 {
            hits[sample_weighted(&weights, &mut rng)] += 1;
        }
        let p0 = hits[0] as f64 / 100_000.0;
        assert!((p0 - 0.5).abs() < 0.01, "empirical p0 = {p0}");
    }

    #[test]
    fn a_single_element_is_always_chosen() {
        let corpus = Corpus::from_seeds(&[image(&[0.0])]).unwrap();
        let weights = selection_weights(corpus.records(), 5, ChooserMode::Recency);
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            assert_eq!(sample_weighted(&weights, &mut rng), 0);
        }
    }

    #[test]
    fn fully_underflowed_weights_fall_back_to_uniform() {
        let corpus = Corpus::from_seeds(&[image(&[0.0]), image(&[1.0])]).unwrap();
        let weights = selection_weights(corpus.records(), 1_000, ChooserMode::Recency);
        assert!(weights.iter().all(|&w| w == 0.0), "exp(-1000) must underflow");
        let mut rng = Rng::new(13);
        let mut hits = [0u32; 2];
        for _ in 0..100_000 {
            hits[sample_weighted(&weights, &mut rng)] += 1;
        }
        let p0 = hits[0] as f64 / 100_000.0;
        assert!((p0 - 0.5).abs() < 0.01, "fallback should be uniform, p0 = {p0}");
    }

    #[test]
    fn unreachable_coverage_keeps_the_corpus_at_the_seeds() {
        let seeds = [image(&[0.0, 0.0]), image(&[10.0, 10.0])];
        let outcome = fuzz(
            &EchoModel,
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(50, 4),
            1,
        )
        .unwrap();
        assert_eq!(outcome.corpus.len(), 2, "identical coverage is never novel");
        assert!(outcome.test_cases.is_empty());
        assert_eq!(outcome.trace.rows.len(), 50);
        assert!(outcome.trace.rows.iter().all(|r| r.corpus_size == 2 && r.testcases == 0));
        assert_eq!(outcome.index.len(), 2);
    }

    #[test]
    fn an_always_firing_objective_yields_a_test_case_per_mutant() {
        let seeds = [image(&[0.0])];
        let outcome = fuzz(
            &EchoModel,
            &seeds,
            &IdentityMutator,
            &Always,
            CoverageIndex::exact(0.5).unwrap(),
            &config(3, 4),
            1,
        )
        .unwrap();
        assert_eq!(outcome.test_cases.len(), 12);
        assert!(outcome.test_cases.iter().all(|tc| tc.objective == "always"));
        assert_eq!(outcome.test_cases[0].iteration, 1);
        assert_eq!(outcome.trace.rows.last().unwrap().testcases, 12);
    }

    #[test]
    fn stop_on_first_halts_with_exactly_one_test_case() {
        let seeds = [image(&[0.0])];
        let mut cfg = config(100, 8);
        cfg.stop_on_first = true;
        let outcome = fuzz(
            &EchoModel,
            &seeds,
            &IdentityMutator,
            &Always,
            CoverageIndex::exact(0.5).unwrap(),
            &cfg,
            1,
        )
        .unwrap();
        assert_eq!(outcome.test_cases.len(), 1);
        assert_eq!(outcome.trace.rows.len(), 1, "one partial row for the stopped iteration");
        assert_eq!(outcome.corpus.iteration(), 1);
    }

    #[test]
    fn drifting_coverage_admits_the_same_payload_repeatedly() {
        let seeds = [image(&[0.5])];
        let outcome = fuzz(
            &DriftModel::new(),
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(1.0).unwrap(),
            &config(1, 2),
            1,
        )
        .unwrap();
        // Seed + both batch mutants: every call drifted far from the frozen
        // index, so the identical payload was admitted twice.
        assert_eq!(outcome.corpus.len(), 3);
        let records = outcome.corpus.records();
        assert_eq!(records[1].payload, records[2].payload);
        assert_eq!(records[1].t_k, 1);
        assert_eq!(records[2].t_k, 1);
        assert_ne!(records[1].id, records[2].id);
        assert_eq!(records[1].seed_ancestor_id, 0);
        assert_eq!(outcome.index.len(), 3);
    }

    #[test]
    fn trace_rows_are_monotone_and_cover_every_iteration() {
        let seeds = [image(&[0.0])];
        let outcome = fuzz(
            &DriftModel::new(),
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(1.0).unwrap(),
            &config(20, 2),
            9,
        )
        .unwrap();
        assert_eq!(outcome.trace.rows.len(), 20);
        for (i, row) in outcome.trace.rows.iter().enumerate() {
            assert_eq!(row.iteration, i as u64 + 1);
        }
        for pair in outcome.trace.rows.windows(2) {
            assert!(pair[1].corpus_size >= pair[0].corpus_size);
            assert!(pair[1].testcases >= pair[0].testcases);
        }
    }

    #[test]
    fn campaigns_replay_bit_identically_from_the_same_seed() {
        let seeds = [image(&[0.2, 0.8]), image(&[0.9, 0.1])];
        let mutator = crate::mutate::ImageMutator::new(crate::mutate::MutationConfig {
            sigma: 0.3,
            range: (0.0, 1.0),
            ball_radius: None,
        })
        .unwrap();
        let run = || {
            fuzz(
                &EchoModel,
                &seeds,
                &mutator,
                &Never,
                CoverageIndex::exact(0.2).unwrap(),
                &config(40, 3),
                77,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.test_cases, b.test_cases);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn surfaced_test_cases_still_satisfy_the_objective_on_recheck() {
        let seeds = [image(&[0.5, 0.5])];
        let mutator = crate::mutate::ImageMutator::new(crate::mutate::MutationConfig {
            sigma: 0.2,
            range: (0.0, 1.0),
            ball_radius: None,
        })
        .unwrap();
        let outcome = fuzz(
            &EchoModel,
            &seeds,
            &mutator,
            &Always,
            CoverageIndex::exact(0.1).unwrap(),
            &config(5, 2),
            123,
        )
        .unwrap();
        assert!(!outcome.test_cases.is_empty());
        for tc in &outcome.test_cases {
            assert!(Always.check(&tc.metadata));
            // The stored metadata matches a fresh evaluation of the payload.
            let again = EchoModel.evaluate(&tc.payload).unwrap();
            assert_eq!(again.metadata, tc.metadata);
        }
    }

    #[test]
    fn random_search_never_grows_the_corpus() {
        let seeds = [image(&[0.1]), image(&[0.9])];
        let outcome = random_search(
            &DriftModel::new(),
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(30, 2),
            5,
        )
        .unwrap();
        assert_eq!(outcome.corpus.len(), 2);
        assert_eq!(outcome.trace.rows.len(), 30);
        assert!(outcome.trace.rows.iter().all(|r| r.corpus_size == 2));
        assert_eq!(outcome.index.len(), 0, "the control never touches the index");
    }

    #[test]
    fn random_search_draws_parents_only_from_seeds() {
        let seeds = [image(&[0.25]), image(&[0.75])];
        let mutator = RecordingMutator { seen: core::cell::RefCell::new(Vec::new()) };
        random_search(
            &EchoModel,
            &seeds,
            &mutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(200, 1),
            8,
        )
        .unwrap();
        let seen = mutator.seen.borrow();
        assert_eq!(seen.len(), 200);
        let from_first = seen.iter().filter(|p| **p == seeds[0]).count();
        assert!(seen.iter().all(|p| *p == seeds[0] || *p == seeds[1]));
        assert!(
            (80..=120).contains(&from_first),
            "uniform over two seeds, got {from_first}/200 from the first"
        );
    }

    #[test]
    fn single_parent_batches_reuse_one_parent_per_iteration() {
        let seeds = [image(&[0.0]), image(&[1.0])];
        let mutator = RecordingMutator { seen: core::cell::RefCell::new(Vec::new()) };
        let mut cfg = config(50, 4);
        cfg.single_parent_batch = true;
        cfg.chooser = ChooserMode::Uniform;
        fuzz(&EchoModel, &seeds, &mutator, &Never, CoverageIndex::exact(10.0).unwrap(), &cfg, 4).unwrap();
        let seen = mutator.seen.borrow();
        assert_eq!(seen.len(), 200);
        let mut saw_both = false;
        for batch in seen.chunks(4) {
            assert!(batch.iter().all(|p| p == &batch[0]), "one parent per batch");
            if batch[0] != seen[0] {
                saw_both = true;
            }
        }
        assert!(saw_both, "uniform choice should reach both seeds across 50 batches");
    }

    #[test]
    fn model_failure_aborts_with_the_offending_input() {
        let seeds = [image(&[0.3])];
        // Two successes: the seed registration and the first mutant.
        let model = FailingModel { allowed: 2, calls: Cell::new(0) };
        let err = fuzz(
            &model,
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(10, 1),
            1,
        )
        .unwrap_err();
        match err {
            EngineError::InputFailure { iteration, payload, source } => {
                assert_eq!(iteration, 2);
                assert_eq!(payload, seeds[0], "identity mutant of the only seed");
                assert!(matches!(source, Error::TrainingDiverged { .. }));
            }
            other => panic!("expected an input failure, got {other:?}"),
        }
    }

    #[test]
    fn seed_failure_reports_iteration_zero() {
        let seeds = [image(&[0.3])];
        let model = FailingModel { allowed: 0, calls: Cell::new(0) };
        let err = fuzz(
            &model,
            &seeds,
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(10, 1),
            1,
        )
        .unwrap_err();
        match err {
            EngineError::InputFailure { iteration, payload, .. } => {
                assert_eq!(iteration, 0);
                assert_eq!(payload, seeds[0]);
            }
            other => panic!("expected an input failure, got {other:?}"),
        }
    }

    #[test]
    fn empty_seeds_and_degenerate_configs_are_rejected() {
        let err = fuzz(
            &EchoModel,
            &[],
            &IdentityMutator,
            &Never,
            CoverageIndex::exact(0.5).unwrap(),
            &config(10, 1),
            1,
        )
        .unwrap_err();
        assert_eq!(err, EngineError::Setup(Error::EmptyCorpus));
        assert!(config(0, 1).validate().is_err());
        assert!(config(1, 0).validate().is_err());
    }

    #[test]
    fn corpus_reassembly_validates_lineage() {
        let seeds = [image(&[0.0])];
        let corpus = Corpus::from_seeds(&seeds).unwrap();
        let records = corpus.records().to_vec();
        assert!(Corpus::from_parts(records.clone(), 0).is_ok());
        assert!(Corpus::from_parts(Vec::new(), 0).is_err());

        let mut broken = records.clone();
        broken[0].parent_id = Some(5);
        assert!(Corpus::from_parts(broken, 0).is_err());

        let mut future = records;
        future[0].t_k = 3;
        assert!(Corpus::from_parts(future, 1).is_err());
    }

    #[test]
    fn text_campaigns_run_end_to_end() {
        struct TextEcho;
        impl ModelUnderTest for TextEcho {
            fn evaluate(&self, input: &Payload) -> Result<Evaluation, Error> {
                let text = input.as_text().ok_or(Error::InvalidParameter { what: "text only" })?;
                Ok(Evaluation {
                    coverage: Vector::from_vec(vec![text.chars.len() as f32]),
                    metadata: Metadata {
                        sampled_text: Some(text.to_string()),
                        ..Metadata::default()
                    },
                })
            }
        }
        let seeds = [Payload::Text(TextInput::from_str("cat dog"))];
        let mutator = crate::mutate::TextMutator::new("abcdefg ".chars().collect()).unwrap();
        let policy = crate::objective::TextPolicy::with_blacklist(&["dog"]).unwrap();
        let outcome =
            fuzz(&TextEcho, &seeds, &mutator, &policy, CoverageIndex::exact(0.5).unwrap(), &config(60, 2), 3)
                .unwrap();
        // Length changes by at most one per mutation, so novel lengths keep
        // appearing and the corpus grows past the seed.
        assert!(outcome.corpus.len() > 1);
        assert!(
            outcome.test_cases.iter().all(|tc| tc.objective == "text_policy"),
            "only the policy objective may fire"
        );
    }
}
