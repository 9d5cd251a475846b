//! Read-only reporting over finished campaign directories.
//!
//! Reports are recomputed from the persisted artifacts every time; nothing
//! here writes into a campaign directory.

use std::path::{Path, PathBuf};

use actfuzz_core::objective::TextPolicy;
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::campaign::{
    build_harness, load_campaign, CampaignConfig, ExperimentKind, LoadedCampaign, SearchMode,
};
use crate::formats::read_json;

/// Everything the report knows about one campaign run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// The campaign directory.
    pub dir: PathBuf,
    /// Which hunt it ran.
    pub experiment: ExperimentKind,
    /// Guided or control.
    pub mode: SearchMode,
    /// Iterations executed.
    pub iterations_run: u64,
    /// Final corpus size.
    pub corpus_size: usize,
    /// Seeds among those.
    pub seed_count: usize,
    /// Test cases surfaced.
    pub testcase_count: usize,
    /// Iteration of the first surfaced test case.
    pub first_hit_iteration: Option<u64>,
    /// The novelty threshold the run used.
    pub threshold: f64,
    /// Forbidden words appearing in surfaced samples (text hunts only).
    pub distinct_blacklist_words: Vec<String>,
    /// Whether any surfaced sample over-repeats a word (text hunts only).
    pub found_repetition: bool,
    /// Wall-clock duration, when the run recorded one.
    pub wall_seconds: Option<f64>,
    /// Test cases that failed re-checking, when re-checking was requested.
    pub recheck_failures: Option<usize>,
}

/// Aggregate over the runs of one campaign root.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    /// The root that was scanned.
    pub root: PathBuf,
    /// One entry per run directory.
    pub runs: Vec<RunReport>,
    /// Fraction of runs that surfaced at least one test case.
    pub success_rate: f64,
    /// Union of forbidden words across runs (text hunts only).
    pub distinct_blacklist_words: Vec<String>,
}

#[derive(serde::Deserialize)]
struct MetaJson {
    #[serde(default)]
    wall_seconds: Option<f64>,
}

/// Finds the run directories under a root: the root itself when it holds
/// a campaign, otherwise its `run-*` children, sorted by name.
pub fn find_campaign_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("config.json").exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut runs: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map_or(false, |n| n.starts_with("run-"))
                && p.join("config.json").exists()
        })
        .collect();
    runs.sort();
    if runs.is_empty() {
        bail!("{} holds neither a campaign nor run-* subdirectories", root.display());
    }
    Ok(runs)
}

fn text_policy(config: &CampaignConfig) -> Result<Option<TextPolicy>> {
    if config.experiment != ExperimentKind::Text {
        return Ok(None);
    }
    let words: Vec<&str> = config.blacklist.iter().map(String::as_str).collect();
    let policy = TextPolicy::new(&words, config.max_repeats)
        .map_err(|e| anyhow::anyhow!("stored policy settings are invalid: {e}"))?;
    Ok(Some(policy))
}

/// Re-evaluates every surfaced test case against the stored model and
/// objective, returning how many no longer qualify (0 for a sound run).
fn recheck(loaded: &LoadedCampaign) -> Result<usize> {
    let harness = build_harness(&loaded.checkpoint, &loaded.config)?;
    let mut failures = 0;
    for tc in &loaded.test_cases {
        let payload = tc.payload.to_core();
        let ok = match harness.model.evaluate(&payload) {
            Ok(eval) => harness.objective.check(&eval.metadata),
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Builds the report for a single run directory.
pub fn report_run(dir: &Path, with_recheck: bool) -> Result<RunReport> {
    let loaded = load_campaign(dir)?;

    let mut size = loaded.outcome.seed_count;
    for row in &loaded.trace.rows {
        if row.corpus_size < size {
            bail!(
                "{}: corpus size shrinks at iteration {} ({} -> {})",
                dir.display(),
                row.iteration,
                size,
                row.corpus_size
            );
        }
        size = row.corpus_size;
    }

    let first_hit_iteration = loaded.test_cases.iter().map(|tc| tc.iteration).min();
    let policy = text_policy(&loaded.config)?;
    let mut words: Vec<String> = Vec::new();
    let mut found_repetition = false;
    if let Some(policy) = &policy {
        for tc in &loaded.test_cases {
            if let Some(text) = &tc.metadata.sampled_text {
                for w in policy.hits(text) {
                    if !words.contains(&w) {
                        words.push(w);
                    }
                }
                found_repetition |= policy.has_repetition(text);
            }
        }
        words.sort();
    }

    let wall_seconds = read_json::<MetaJson>(&dir.join("meta.json"))
        .ok()
        .and_then(|m| m.wall_seconds);
    let recheck_failures = if with_recheck { Some(recheck(&loaded)?) } else { None };

    Ok(RunReport {
        dir: dir.to_path_buf(),
        experiment: loaded.config.experiment,
        mode: loaded.config.mode,
        iterations_run: loaded.outcome.iterations_run,
        corpus_size: loaded.outcome.corpus_size,
        seed_count: loaded.outcome.seed_count,
        testcase_count: loaded.outcome.testcase_count,
        first_hit_iteration,
        threshold: loaded.outcome.threshold,
        distinct_blacklist_words: words,
        found_repetition,
        wall_seconds,
        recheck_failures,
    })
}

/// Builds the aggregate report for a campaign root (single run or
/// `run-*` repeats).
pub fn report_campaign(root: &Path, with_recheck: bool) -> Result<CampaignReport> {
    let dirs = find_campaign_dirs(root)?;
    let runs: Vec<RunReport> = dirs
        .iter()
        .map(|d| report_run(d, with_recheck))
        .collect::<Result<_>>()?;
    let hits = runs.iter().filter(|r| r.testcase_count > 0).count();
    let mut words: Vec<String> = Vec::new();
    for run in &runs {
        for w in &run.distinct_blacklist_words {
            if !words.contains(w) {
                words.push(w.clone());
            }
        }
    }
    words.sort();
    Ok(CampaignReport {
        root: root.to_path_buf(),
        success_rate: hits as f64 / runs.len() as f64,
        distinct_blacklist_words: words,
        runs,
    })
}

/// Merges the per-run traces into one CSV with a leading `run` column.
pub fn merged_trace_csv(report: &CampaignReport) -> Result<String> {
    let mut out = String::from("run,iteration,corpus_size,testcases\n");
    for (k, run) in report.runs.iter().enumerate() {
        let trace = crate::formats::read_trace(&run.dir.join("trace.csv"))?;
        for row in &trace.rows {
            out.push_str(&format!(
                "{k},{},{},{}\n",
                row.iteration, row.corpus_size, row.testcases
            ));
        }
    }
    Ok(out)
}

/// Renders the human-readable report.
pub fn render_text(report: &CampaignReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("campaign root: {}\n", report.root.display()));
    for run in &report.runs {
        out.push_str(&format!(
            "run {}: experiment={} mode={} iterations={} corpus={} (seeds {}) testcases={}",
            run.dir.display(),
            run.experiment.as_str(),
            match run.mode {
                SearchMode::Coverage => "coverage",
                SearchMode::Random => "random",
            },
            run.iterations_run,
            run.corpus_size,
            run.seed_count,
            run.testcase_count,
        ));
        if let Some(it) = run.first_hit_iteration {
            out.push_str(&format!(" first-hit={it}"));
        }
        out.push_str(&format!(" threshold={:.6}", run.threshold));
        if let Some(secs) = run.wall_seconds {
            out.push_str(&format!(" wall={secs:.1}s"));
        }
        if run.experiment == ExperimentKind::Text {
            out.push_str(&format!(
                " blacklist-words={} repetition={}",
                if run.distinct_blacklist_words.is_empty() {
                    "-".to_owned()
                } else {
                    run.distinct_blacklist_words.join("+")
                },
                run.found_repetition,
            ));
        }
        if let Some(bad) = run.recheck_failures {
            out.push_str(&format!(" recheck-failures={bad}"));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "runs: {}  success rate: {:.2}\n",
        report.runs.len(),
        report.success_rate
    ));
    if !report.distinct_blacklist_words.is_empty() {
        out.push_str(&format!(
            "distinct blacklist words overall: {}\n",
            report.distinct_blacklist_words.join(", ")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{run_to_dir, CoverageChoice};
    use crate::formats::Checkpoint;
    use actfuzz_core::models::{generate_blobs, train_mlp, BlobSpec, LossKind, MlpTrainConfig};
    use actfuzz_core::{ImageInput, Payload};
    use tempfile::tempdir;

    fn tiny_campaign(dir: &Path, mode: SearchMode, campaign_seed: u64) {
        let data = generate_blobs(
            &BlobSpec {
                classes: 2,
                dim: 4,
                per_class: 30,
                range: (0.0, 1.0),
                center_margin: 0.2,
                noise: 0.05,
                min_center_distance: 0.4,
            },
            3,
        )
        .unwrap();
        let model = train_mlp(
            &data,
            &[4, 6, 2],
            &MlpTrainConfig { steps: 80, batch: 8, lr: 0.2, seed: 4, loss: LossKind::Safe },
        )
        .unwrap();
        let ckpt = Checkpoint::from_mlp(&model, "quant", Default::default());
        let seeds: Vec<Payload> = data
            .inputs
            .iter()
            .take(3)
            .map(|v| Payload::Image(ImageInput::new(v.clone())))
            .collect();
        let mut cfg = CampaignConfig::defaults(ExperimentKind::Quant);
        cfg.iterations = 25;
        cfg.batch = 2;
        cfg.mode = mode;
        cfg.campaign_seed = campaign_seed;
        cfg.coverage_mode = CoverageChoice::Exact;
        run_to_dir(dir, &ckpt, &seeds, &cfg).unwrap();
    }

    #[test]
    fn single_run_reports_match_the_stored_outcome() {
        let dir = tempdir().unwrap();
        let camp = dir.path().join("camp");
        tiny_campaign(&camp, SearchMode::Coverage, 5);

        let report = report_campaign(&camp, true).unwrap();
        assert_eq!(report.runs.len(), 1);
        let run = &report.runs[0];
        assert_eq!(run.seed_count, 3);
        assert_eq!(run.iterations_run, 25);
        assert!(run.corpus_size >= run.seed_count);
        assert_eq!(run.recheck_failures, Some(0));
        assert!(run.wall_seconds.is_some());
        let expected = if run.testcase_count > 0 { 1.0 } else { 0.0 };
        assert_eq!(report.success_rate, expected);

        let text = render_text(&report);
        assert!(text.contains("experiment=quant"));
    }

    #[test]
    fn repeat_roots_aggregate_success_by_hand_count() {
        let dir = tempdir().unwrap();
        for k in 0..3 {
            tiny_campaign(&dir.path().join(format!("run-{k:03}")), SearchMode::Coverage, k);
        }
        let report = report_campaign(dir.path(), false).unwrap();
        assert_eq!(report.runs.len(), 3);
        let by_hand = report.runs.iter().filter(|r| r.testcase_count > 0).count();
        assert!((report.success_rate - by_hand as f64 / 3.0).abs() < 1e-12);

        let merged = merged_trace_csv(&report).unwrap();
        let mut lines = merged.lines();
        assert_eq!(lines.next(), Some("run,iteration,corpus_size,testcases"));
        assert_eq!(lines.count(), 75, "25 iterations from each of 3 runs");
    }

    #[test]
    fn reporting_leaves_the_campaign_untouched() {
        let dir = tempdir().unwrap();
        let camp = dir.path().join("camp");
        tiny_campaign(&camp, SearchMode::Random, 9);

        let before = snapshot(&camp);
        report_campaign(&camp, true).unwrap();
        assert_eq!(before, snapshot(&camp));
    }

    fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            let mut entries: Vec<_> =
                std::fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
            entries.sort();
            for p in entries {
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push((p.clone(), std::fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn empty_campaigns_report_zero_counts() {
        let dir = tempdir().unwrap();
        let camp = dir.path().join("camp");
        // A random-mode blip too short to find anything.
        tiny_campaign(&camp, SearchMode::Random, 2);
        let report = report_run(&camp, false).unwrap();
        assert_eq!(report.corpus_size, report.seed_count);
        // Zero or more test cases; the zero path must render cleanly.
        let full = report_campaign(&camp, false).unwrap();
        render_text(&full);
    }
}
