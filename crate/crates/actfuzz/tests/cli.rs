//! End-to-end smoke tests of the command-line binary: train a small
//! model, fuzz it, baseline it, and report over the results.

use std::path::Path;
use std::process::Command;

fn actfuzz() -> Command {
    Command::new(env!("CARGO_BIN_EXE_actfuzz"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawning the binary");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

#[test]
fn train_fuzz_baseline_report_work_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let seeds = dir.path().join("seeds");

    let log = run_ok(actfuzz()
        .arg("train")
        .args(["--experiment", "quant", "--seed", "11"])
        .arg("--out")
        .arg(&model)
        .arg("--seeds-out")
        .arg(&seeds));
    assert!(log.contains("accuracy"), "training should log accuracy:\n{log}");
    assert!(model.exists());
    assert!(seeds.join("seed-000.json").exists());

    let camp = dir.path().join("camp");
    run_ok(actfuzz()
        .arg("fuzz")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&camp)
        .args(["--iterations", "40", "--batch", "2", "--campaign-seed", "7"])
        .args(["--coverage-mode", "exact"]));
    for artifact in ["config.json", "model.json", "trace.csv", "outcome.json"] {
        assert!(camp.join(artifact).exists(), "{artifact} missing");
    }

    let base = dir.path().join("base");
    run_ok(actfuzz()
        .arg("baseline")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&base)
        .args(["--iterations", "40", "--batch", "2", "--campaign-seed", "7"]));
    let config = std::fs::read_to_string(base.join("config.json")).unwrap();
    assert!(config.contains("\"random\""), "baseline must run in random mode");

    let report = run_ok(actfuzz()
        .arg("report")
        .arg("--campaign")
        .arg(&camp)
        .arg("--recheck"));
    assert!(report.contains("experiment=quant"), "unexpected report:\n{report}");
    assert!(report.contains("recheck-failures=0"), "recheck should pass:\n{report}");

    let json = run_ok(actfuzz().arg("report").arg("--campaign").arg(&camp).arg("--json"));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed["runs"].as_array().unwrap().len(), 1);
}

#[test]
fn repeat_runs_get_derived_seeds_and_aggregate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let seeds = dir.path().join("seeds");
    run_ok(actfuzz()
        .arg("train")
        .args(["--experiment", "quant", "--seed", "3"])
        .arg("--out")
        .arg(&model)
        .arg("--seeds-out")
        .arg(&seeds));

    let root = dir.path().join("runs");
    run_ok(actfuzz()
        .arg("fuzz")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&root)
        .args(["--iterations", "25", "--campaign-seed", "100", "--repeat", "3"])
        .args(["--coverage-mode", "exact"]));

    for (k, expected_seed) in [(0u32, 100u64), (1, 101), (2, 102)] {
        let config =
            std::fs::read_to_string(root.join(format!("run-{k:03}")).join("config.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&config).unwrap();
        assert_eq!(parsed["campaign_seed"].as_u64(), Some(expected_seed));
    }

    let merged = dir.path().join("merged.csv");
    run_ok(actfuzz()
        .arg("report")
        .arg("--campaign")
        .arg(&root)
        .arg("--merged-trace")
        .arg(&merged));
    let csv = std::fs::read_to_string(&merged).unwrap();
    assert!(csv.starts_with("run,iteration,corpus_size,testcases\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 25);
}

#[test]
fn text_experiment_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let seeds = dir.path().join("seeds");
    let corpus = dir.path().join("corpus.txt");

    run_ok(actfuzz()
        .arg("train")
        .args(["--experiment", "text", "--seed", "2"])
        .arg("--out")
        .arg(&model)
        .arg("--seeds-out")
        .arg(&seeds)
        .arg("--corpus-out")
        .arg(&corpus));
    assert!(corpus.exists());
    assert!(seeds.join("seed-000.txt").exists(), "text seeds are plain files");

    let camp = dir.path().join("camp");
    run_ok(actfuzz()
        .arg("fuzz")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&camp)
        .args(["--iterations", "60", "--batch", "1", "--campaign-seed", "1"]));
    let report = run_ok(actfuzz().arg("report").arg("--campaign").arg(&camp));
    assert!(report.contains("experiment=text"), "unexpected report:\n{report}");
}

#[test]
fn fuzz_refuses_to_clobber_an_existing_campaign(){
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let seeds = dir.path().join("seeds");
    run_ok(actfuzz()
        .arg("train")
        .args(["--experiment", "quant", "--seed", "5"])
        .arg("--out")
        .arg(&model)
        .arg("--seeds-out")
        .arg(&seeds));
    let camp = dir.path().join("camp");
    let mut fuzz = actfuzz();
    fuzz.arg("fuzz")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&camp)
        .args(["--iterations", "5", "--coverage-mode", "exact"]);
    run_ok(&mut fuzz);

    let mut again = actfuzz();
    again
        .arg("fuzz")
        .arg("--model")
        .arg(&model)
        .arg("--seeds")
        .arg(&seeds)
        .arg("--out")
        .arg(&camp)
        .args(["--iterations", "5", "--coverage-mode", "exact"]);
    let out = again.output().unwrap();
    assert!(!out.status.success(), "overwriting a campaign must fail");
    assert!(Path::new(&camp).join("outcome.json").exists(), "original left intact");
}
