//! End-to-end acceptance suite. Each test is one shipped claim about the
//! fuzzer, verified from scratch: models are trained in-process and every
//! campaign runs the real engine. One pass/fail line per claim.
//!
//! Everything here is deterministic: datasets, training, and campaigns
//! all derive from seeds fixed in this file.

use std::sync::OnceLock;

use actfuzz::campaign::{
    build_harness, run_in_memory, run_to_dir, replay_dir, CampaignConfig, CoverageChoice,
    ExperimentKind, SearchMode,
};
use actfuzz::compare_campaign_dirs;
use actfuzz::experiments::{
    build_nan_assets, build_quant_assets, build_text_assets, NanAssets, QuantAssets, TextAssets,
    QUANT_RADIUS, QUANT_SEED_COUNT,
};
use actfuzz_core::coverage::IndexParams;
use actfuzz_core::engine::{sample_weighted, selection_weights, ChooserMode, InputRecord};
use actfuzz_core::objective::{NonFinite, Objective, TextPolicy};
use actfuzz_core::{CoverageIndex, FuzzOutcome, ImageInput, Payload, Rng, Vector};

// Tolerances and budgets, pinned.

/// Fuzzing campaigns hunting the non-finite loss, and how many must hit.
const NONFINITE_CAMPAIGNS: u64 = 10;
const NONFINITE_MIN_HITS: u64 = 9;
/// Mutation budget per non-finite campaign.
const NONFINITE_BUDGET: u64 = 50_000;
/// Mutation budget per random-search control run (must find nothing).
const NONFINITE_CONTROL_BUDGET: u64 = 100_000;

/// Mutation budget per seed in the disagreement hunt.
const QUANT_BUDGET: u64 = 10_000;
/// At least half the seeds must yield a disagreement under fuzzing.
const QUANT_MIN_SEED_HITS: usize = QUANT_SEED_COUNT / 2;

/// Mutation budget per text campaign, and how many paired runs.
const TEXT_BUDGET: u64 = 100_000;
const TEXT_PAIRED_RUNS: u64 = 5;
/// The repetition allowance used by the text campaigns: any immediately
/// repeated word is a violation, which is what both search modes are
/// required to find.
const TEXT_MAX_REPEATS: usize = 1;

/// Absolute tolerance on empirical chooser frequencies over 1e5 draws.
const CHOOSER_DRAWS: usize = 100_000;
const CHOOSER_TOLERANCE: f64 = 0.01;

/// Interleaved coverage operations checked against the linear scan, and
/// the agreement floor for the approximate index.
const COVERAGE_OPS: usize = 1_000;
const APPROX_AGREEMENT_MIN: f64 = 0.99;

/// Slack on the mutation-ball radius check: mutants are projected into
/// the ball in f64 and then stored as f32, so a coordinate may round to
/// just outside the exact radius.
const BALL_TOLERANCE: f64 = 1e-5;

// Shared trained models (training is deterministic; do it once).

fn nan_assets() -> &'static NanAssets {
    static ASSETS: OnceLock<NanAssets> = OnceLock::new();
    ASSETS.get_or_init(|| build_nan_assets(5).expect("building the non-finite experiment"))
}

fn quant_assets() -> &'static QuantAssets {
    static ASSETS: OnceLock<QuantAssets> = OnceLock::new();
    ASSETS.get_or_init(|| build_quant_assets(11).expect("building the disagreement experiment"))
}

fn text_assets() -> &'static TextAssets {
    static ASSETS: OnceLock<TextAssets> = OnceLock::new();
    ASSETS.get_or_init(|| build_text_assets(7).expect("building the text experiment"))
}

/// Per-seed campaign results for the disagreement hunt, shared by the
/// hit-rate claim and the mutation-ball claim.
struct QuantRuns {
    /// One guided outcome per seed image.
    fuzz: Vec<FuzzOutcome>,
    /// Whether the guided run on seed i surfaced a disagreement.
    fuzz_hit: Vec<bool>,
    /// Whether the random-search run on seed i surfaced one.
    random_hit: Vec<bool>,
}

fn quant_runs() -> &'static QuantRuns {
    static RUNS: OnceLock<QuantRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let assets = quant_assets();
        let mut runs = QuantRuns { fuzz: Vec::new(), fuzz_hit: Vec::new(), random_hit: Vec::new() };
        for (i, seed) in assets.seeds.iter().enumerate() {
            for mode in [SearchMode::Coverage, SearchMode::Random] {
                let mut cfg = CampaignConfig::defaults(ExperimentKind::Quant);
                cfg.iterations = QUANT_BUDGET / 10;
                cfg.batch = 10;
                cfg.mode = mode;
                cfg.campaign_seed = 1000 + i as u64;
                cfg.stop_on_first = true;
                cfg.coverage_mode = CoverageChoice::Exact;
                let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");
                let art = run_in_memory(&harness, std::slice::from_ref(seed), &cfg)
                    .expect("campaign");
                let hit = !art.outcome.test_cases.is_empty();
                match mode {
                    SearchMode::Coverage => {
                        runs.fuzz_hit.push(hit);
                        runs.fuzz.push(art.outcome);
                    }
                    SearchMode::Random => runs.random_hit.push(hit),
                }
            }
        }
        runs
    })
}

#[test]
fn criterion_1_fuzzing_finds_the_nonfinite_loss_and_random_search_never_does() {
    let assets = nan_assets();
    let cfg = CampaignConfig::defaults(ExperimentKind::Nan);
    let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");

    // The trained model is clean on held-out data: no input triggers the
    // non-finiteness objective.
    for seed in &assets.seeds {
        let eval = harness.model.evaluate(seed).expect("seed evaluation");
        assert!(
            !NonFinite.check(&eval.metadata),
            "a held-out input already triggers the objective; the hunt would be vacuous"
        );
    }

    let mut hits = 0;
    let mut first_hits = Vec::new();
    for k in 0..NONFINITE_CAMPAIGNS {
        let mut cfg = CampaignConfig::defaults(ExperimentKind::Nan);
        cfg.iterations = NONFINITE_BUDGET / 10;
        cfg.batch = 10;
        cfg.campaign_seed = 101 + k;
        cfg.stop_on_first = true;
        let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");
        let art = run_in_memory(&harness, &assets.seeds, &cfg).expect("campaign");
        if let Some(tc) = art.outcome.test_cases.first() {
            hits += 1;
            first_hits.push(tc.iteration * 10);
        }
    }

    let mut control_cases = 0;
    for k in 0..NONFINITE_CAMPAIGNS {
        let mut cfg = CampaignConfig::defaults(ExperimentKind::Nan);
        cfg.iterations = NONFINITE_CONTROL_BUDGET / 10;
        cfg.batch = 10;
        cfg.mode = SearchMode::Random;
        cfg.campaign_seed = 201 + k;
        let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");
        let art = run_in_memory(&harness, &assets.seeds, &cfg).expect("control run");
        control_cases += art.outcome.test_cases.len();
    }

    println!(
        "fuzzing: {hits}/{NONFINITE_CAMPAIGNS} campaigns hit within {NONFINITE_BUDGET} \
         mutations (first hits at {first_hits:?}); random search: {control_cases} hits \
         in {NONFINITE_CAMPAIGNS} runs of {NONFINITE_CONTROL_BUDGET}"
    );
    assert!(
        hits >= NONFINITE_MIN_HITS,
        "only {hits} of {NONFINITE_CAMPAIGNS} campaigns surfaced a non-finite value"
    );
    assert_eq!(
        control_cases, 0,
        "random search should never reach the non-finite region"
    );
}

#[test]
fn criterion_2_truncation_is_clean_on_data_but_fuzzing_finds_ball_disagreements() {
    let assets = quant_assets();

    // Zero argmax disagreements between the full and truncated model on
    // the entire held-out set.
    let cfg = CampaignConfig::defaults(ExperimentKind::Quant);
    let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");
    let mut disagreements = 0;
    for x in &assets.test_data.inputs {
        let payload = Payload::Image(ImageInput::new(x.clone()));
        let eval = harness.model.evaluate(&payload).expect("evaluation");
        if harness.objective.check(&eval.metadata) {
            disagreements += 1;
        }
    }
    assert_eq!(
        disagreements, 0,
        "truncation already disagrees on the held-out set; nothing to hunt"
    );

    let runs = quant_runs();
    let fuzz_hits = runs.fuzz_hit.iter().filter(|&&h| h).count();
    let random_hits = runs.random_hit.iter().filter(|&&h| h).count();
    println!(
        "disagreements on held-out set: {disagreements}; fuzzing hit {fuzz_hits}/{} seeds, \
         random search {random_hits}/{} at {QUANT_BUDGET} mutations each",
        runs.fuzz_hit.len(),
        runs.random_hit.len(),
    );
    assert!(
        fuzz_hits >= QUANT_MIN_SEED_HITS,
        "fuzzing found disagreements for only {fuzz_hits} of {} seeds",
        runs.fuzz_hit.len()
    );
    assert!(
        random_hits * 2 <= fuzz_hits,
        "random search ({random_hits} seeds) is too close to fuzzing ({fuzz_hits} seeds)"
    );
}

#[test]
fn criterion_3_fuzzing_matches_random_search_on_blacklist_words_and_both_find_repeats() {
    let assets = text_assets();
    let words: Vec<&str> = assets.blacklist.iter().map(String::as_str).collect();
    let policy = TextPolicy::new(&words, TEXT_MAX_REPEATS).expect("policy");

    let mut fuzz_words: Vec<String> = Vec::new();
    let mut random_words: Vec<String> = Vec::new();
    let mut fuzz_blacklist_cases = 0usize;
    let mut fuzz_repeat = false;
    let mut random_repeat = false;

    for k in 0..TEXT_PAIRED_RUNS {
        for mode in [SearchMode::Coverage, SearchMode::Random] {
            let mut cfg = CampaignConfig::defaults(ExperimentKind::Text);
            cfg.iterations = TEXT_BUDGET / 10;
            cfg.batch = 10;
            cfg.mode = mode;
            cfg.campaign_seed = 7000 + k;
            cfg.sample_seed = Some(k + 1);
            cfg.blacklist = assets.blacklist.clone();
            cfg.max_repeats = TEXT_MAX_REPEATS;
            let harness = build_harness(&assets.checkpoint, &cfg).expect("harness");
            let art = run_in_memory(&harness, &assets.seeds, &cfg).expect("campaign");

            let (found_words, blacklist_cases, repeat) = scan_text_cases(&art.outcome, &policy);
            match mode {
                SearchMode::Coverage => {
                    merge(&mut fuzz_words, found_words);
                    fuzz_blacklist_cases += blacklist_cases;
                    fuzz_repeat |= repeat;
                }
                SearchMode::Random => {
                    merge(&mut random_words, found_words);
                    random_repeat |= repeat;
                }
            }
        }
    }

    fuzz_words.sort();
    random_words.sort();
    println!(
        "over {TEXT_PAIRED_RUNS} paired runs of {TEXT_BUDGET} mutations: fuzzing found \
         {fuzz_blacklist_cases} blacklisted samples covering {fuzz_words:?}; random search \
         covered {random_words:?}; repeats found: fuzzing {fuzz_repeat}, random {random_repeat}"
    );
    assert!(fuzz_blacklist_cases >= 1, "fuzzing never surfaced a blacklisted word");
    assert!(
        fuzz_words.len() >= random_words.len(),
        "fuzzing covered fewer distinct forbidden words ({}) than random search ({})",
        fuzz_words.len(),
        random_words.len()
    );
    assert!(fuzz_repeat, "fuzzing never surfaced a repeated word");
    assert!(random_repeat, "random search never surfaced a repeated word");
}

fn scan_text_cases(outcome: &FuzzOutcome, policy: &TextPolicy) -> (Vec<String>, usize, bool) {
    let mut words = Vec::new();
    let mut blacklist_cases = 0;
    let mut repeat = false;
    for tc in &outcome.test_cases {
        let text = tc.metadata.sampled_text.as_deref().unwrap_or("");
        let hits = policy.hits(text);
        if !hits.is_empty() {
            blacklist_cases += 1;
        }
        for w in hits {
            if !words.contains(&w) {
                words.push(w);
            }
        }
        repeat |= policy.has_repetition(text);
    }
    (words, blacklist_cases, repeat)
}

fn merge(into: &mut Vec<String>, from: Vec<String>) {
    for w in from {
        if !into.contains(&w) {
            into.push(w);
        }
    }
}

#[test]
fn criterion_4_recency_chooser_frequencies_match_the_formula() {
    let t = 4u64;
    let records: Vec<InputRecord> = (0..5)
        .map(|k| InputRecord {
            id: k as usize,
            payload: Payload::Image(ImageInput::new(Vector::from_vec(vec![k as f32]))),
            seed_ancestor_id: k as usize,
            parent_id: None,
            t_k: k,
        })
        .collect();

    let weights = selection_weights(&records, t, ChooserMode::Recency);
    let total: f64 = weights.iter().sum();
    let expected: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let mut counts = vec![0usize; records.len()];
    let mut rng = Rng::new(404);
    for _ in 0..CHOOSER_DRAWS {
        counts[sample_weighted(&weights, &mut rng)] += 1;
    }

    let mut worst = 0.0f64;
    for (k, &count) in counts.iter().enumerate() {
        let freq = count as f64 / CHOOSER_DRAWS as f64;
        let gap = (freq - expected[k]).abs();
        worst = worst.max(gap);
        assert!(
            gap <= CHOOSER_TOLERANCE,
            "element {k}: empirical {freq:.4} vs expected {:.4}",
            expected[k]
        );
    }
    println!(
        "expected {:?}, worst absolute gap {worst:.5} over {CHOOSER_DRAWS} draws",
        expected.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_5_exact_coverage_matches_brute_force_and_approximate_mostly_agrees() {
    const DIM: usize = 16;
    let threshold = 2.0;
    let mut exact = CoverageIndex::exact(threshold).expect("exact index");
    let mut approx = CoverageIndex::approximate(threshold, IndexParams::default(), 77)
        .expect("approximate index");
    let mut stored: Vec<Vec<f32>> = Vec::new();

    let mut rng = Rng::new(909);
    let mut approx_agree = 0usize;
    for _ in 0..COVERAGE_OPS {
        let v: Vec<f32> = (0..DIM).map(|_| (rng.normal() * 1.5) as f32).collect();

        // Brute-force oracle: nearest stored vector by Euclidean distance,
        // ties to the lowest id; novel iff strictly beyond the threshold.
        // Coordinates are widened to f64 before subtracting, matching the
        // index's documented arithmetic, so distances compare exactly.
        let mut nearest: Option<(f64, usize)> = None;
        for (id, s) in stored.iter().enumerate() {
            let d = v
                .iter()
                .zip(s)
                .map(|(&a, &b)| {
                    let diff = a as f64 - b as f64;
                    diff * diff
                })
                .sum::<f64>()
                .sqrt();
            let better = match nearest {
                None => true,
                Some((bd, _)) => d < bd,
            };
            if better {
                nearest = Some((d, id));
            }
        }
        let oracle_new = nearest.map_or(true, |(d, _)| d > threshold);

        let e = exact.probe(&v).expect("exact probe");
        assert_eq!(e.is_new, oracle_new, "exact decision diverged from the linear scan");
        assert_eq!(e.nearest_id, nearest.map(|(_, id)| id));
        if let Some((d, _)) = nearest {
            assert_eq!(e.nearest_distance, d, "exact distance diverged from the linear scan");
        }

        let a = approx.probe(&v).expect("approximate probe");
        if a.is_new == oracle_new {
            approx_agree += 1;
        }

        // Interleave: roughly 70% of operations insert, the rest only query.
        if rng.uniform() < 0.7 {
            exact.insert(&v).expect("exact insert");
            approx.insert(&v).expect("approximate insert");
            stored.push(v);
        }
    }

    let agreement = approx_agree as f64 / COVERAGE_OPS as f64;
    println!(
        "{COVERAGE_OPS} interleaved operations, {} stored: exact matched the scan on all; \
         approximate agreement {agreement:.4}",
        stored.len()
    );
    assert!(
        agreement >= APPROX_AGREEMENT_MIN,
        "approximate index agreement {agreement:.4} below {APPROX_AGREEMENT_MIN}"
    );
}

#[test]
fn criterion_6_campaign_reruns_are_byte_identical_except_timestamps() {
    let scratch = tempfile::tempdir().expect("tempdir");

    // A guided image campaign through the approximate index.
    let quant = quant_assets();
    let mut cfg = CampaignConfig::defaults(ExperimentKind::Quant);
    cfg.iterations = 300;
    cfg.batch = 5;
    cfg.campaign_seed = 31;
    let a = scratch.path().join("quant-a");
    let b = scratch.path().join("quant-b");
    run_to_dir(&a, &quant.checkpoint, &quant.seeds, &cfg).expect("campaign");
    replay_dir(&a, &b).expect("replay");
    let diff = compare_campaign_dirs(&a, &b).expect("comparison");
    assert!(diff.is_empty(), "quant campaign replay differs: {diff:?}");

    // A text campaign, covering the language-model and text formats.
    let text = text_assets();
    let mut cfg = CampaignConfig::defaults(ExperimentKind::Text);
    cfg.iterations = 100;
    cfg.batch = 2;
    cfg.campaign_seed = 32;
    cfg.blacklist = text.blacklist.clone();
    let a = scratch.path().join("text-a");
    let b = scratch.path().join("text-b");
    run_to_dir(&a, &text.checkpoint, &text.seeds, &cfg).expect("campaign");
    replay_dir(&a, &b).expect("replay");
    let diff = compare_campaign_dirs(&a, &b).expect("comparison");
    assert!(diff.is_empty(), "text campaign replay differs: {diff:?}");

    println!("quant and text campaigns replayed byte-for-byte from their config snapshots");
}

#[test]
fn criterion_7_every_quant_corpus_element_stays_inside_the_mutation_ball() {
    let runs = quant_runs();
    let mut checked = 0usize;
    let mut grown = 0usize;
    for outcome in &runs.fuzz {
        let records = outcome.corpus.records();
        grown += records.len().saturating_sub(1);
        for record in records {
            let pixels = &record.payload.as_image().expect("image corpus").pixels;
            let ancestor = &records[record.seed_ancestor_id]
                .payload
                .as_image()
                .expect("image ancestor")
                .pixels;
            assert_eq!(records[record.seed_ancestor_id].parent_id, None);

            let mut linf = 0.0f64;
            for (&a, &b) in pixels.as_slice().iter().zip(ancestor.as_slice()) {
                linf = linf.max(((a as f64) - (b as f64)).abs());
                assert!(
                    (0.0..=1.0).contains(&a),
                    "corpus pixel {a} outside the declared range"
                );
            }
            assert!(
                linf <= QUANT_RADIUS + BALL_TOLERANCE,
                "corpus element {} strayed {linf} from its seed (radius {QUANT_RADIUS})",
                record.id
            );
            checked += 1;
        }
    }
    assert!(
        grown > 0,
        "no campaign grew its corpus; the containment scan would be vacuous"
    );
    println!(
        "{checked} corpus elements across {} campaigns all within {QUANT_RADIUS} (+{BALL_TOLERANCE}) \
         of their seeds and inside the pixel range",
        runs.fuzz.len()
    );
}
