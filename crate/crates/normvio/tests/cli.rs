use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use normvio::cli::{load_corpus, read_json, PREDICTIONS_FILE, REPORT_FILE};
use normvio::evalkit::{read_predictions, EvalReport};
use normvio::manifest::{RunManifest, MANIFEST_NAME};

fn normvio(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normvio"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = normvio(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(path: PathBuf) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn gen_synthetic_twice_gives_identical_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-synthetic", "--seed", "7", "--out", "a"]);
    ok(tmp.path(), &["gen-synthetic", "--seed", "7", "--out", "b"]);
    for f in ["dump.jsonl", "rules.jsonl", "archive.jsonl", "truth.json"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f}");
    }
    let (ma, mb) = (
        manifest(tmp.path().join("a").join(MANIFEST_NAME)),
        manifest(tmp.path().join("b").join(MANIFEST_NAME)),
    );
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.outputs.len(), 4);

    ok(tmp.path(), &["gen-synthetic", "--seed", "8", "--out", "c"]);
    let c = std::fs::read(tmp.path().join("c/dump.jsonl")).unwrap();
    assert_ne!(c, std::fs::read(tmp.path().join("a/dump.jsonl")).unwrap());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = normvio(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn evaluate_without_predictions_fails_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = normvio(tmp.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no predictions"));
    assert!(!tmp.path().join("work").exists());
}

#[test]
fn config_is_validated_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[seeds]\ndata = 3\nshuffle = true\n").unwrap();
    let out = normvio(tmp.path(), &["--config", "bad.toml", "gen-synthetic"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shuffle"));

    std::fs::write(
        tmp.path().join("p.toml"),
        "[seeds]\ndata = 3\n[paths]\nsynthetic = \"from-config\"\n",
    )
    .unwrap();
    ok(tmp.path(), &["--config", "p.toml", "gen-synthetic"]);
    let m = manifest(tmp.path().join("from-config").join(MANIFEST_NAME));
    assert_eq!(m.settings["seed"], 3);
    ok(tmp.path(), &["--config", "p.toml", "gen-synthetic", "--seed", "5", "--out", "flagged"]);
    let m = manifest(tmp.path().join("flagged").join(MANIFEST_NAME));
    assert_eq!(m.settings["seed"], 5);
}

#[test]
fn synthetic_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-synthetic", "--seed", "11", "--out", "syn"]);
    ok(
        dir,
        &[
            "build-corpus", "--dump", "syn/dump.jsonl", "--rules", "syn/rules.jsonl", "--archive",
            "syn/archive.jsonl", "--out", "corpus", "--split-seed", "4",
        ],
    );
    let (dataset, meta) = load_corpus(&dir.join("corpus")).unwrap();
    assert!(dataset.moderated().count() > 0);
    assert_eq!(meta.split.seed, 4);

    let detector = [
        "train-detector", "--corpus", "corpus", "--variant", "comment", "--variant", "community", "--seed", "1",
    ];
    ok(dir, &[&detector[..], &["--out", "det"]].concat());
    ok(dir, &["build-pairs", "--corpus", "corpus", "--seed", "2", "--out", "pairs"]);
    ok(dir, &["train-explainer", "--pairs", "pairs", "--seed", "1", "--out", "exp"]);
    ok(
        dir,
        &[
            "evaluate", "--predictions", "det/predictions.jsonl", "--predictions", "exp/predictions.jsonl",
            "--baselines", "corpus", "--out", "reports",
        ],
    );
    ok(
        dir,
        &["analyze", "--corpus", "corpus", "--predictions", "det/predictions.jsonl", "--out", "analysis"],
    );

    // the final report exists and parses
    let report: serde_json::Value = read_json(&dir.join("reports").join(REPORT_FILE)).unwrap();
    let main: EvalReport = serde_json::from_value(report["report"].clone()).unwrap();
    let models: Vec<&str> = main.models.iter().map(|m| m.model.as_str()).collect();
    assert_eq!(models, ["comment", "community", "rule"]);
    assert!(main.scores.iter().all(|s| (0.0..=1.0).contains(&s.mean)));
    let baselines: Vec<EvalReport> = serde_json::from_value(report["baselines"].clone()).unwrap();
    assert_eq!(baselines.len(), 2);
    let analysis: serde_json::Value = read_json(&dir.join("analysis/analysis.json")).unwrap();
    assert_eq!(analysis["stats"]["total_conversations"], dataset.len());

    for stage in ["syn", "corpus", "det", "pairs", "exp", "reports", "analysis"] {
        let m = manifest(dir.join(stage).join(MANIFEST_NAME));
        assert!(!m.outputs.is_empty(), "{stage}");
    }

    // rerunning a stage reproduces its outputs
    ok(dir, &[&detector[..], &["--out", "det-again"]].concat());
    let preds = |d: &str| read_predictions(std::fs::read(dir.join(d).join(PREDICTIONS_FILE)).unwrap().as_slice()).unwrap();
    assert_eq!(preds("det"), preds("det-again"));
    assert_eq!(
        manifest(dir.join("det").join(MANIFEST_NAME)).outputs,
        manifest(dir.join("det-again").join(MANIFEST_NAME)).outputs
    );

    // the id-only release plus the dump rebuilds the dataset
    ok(
        dir,
        &[
            "rehydrate", "--release", "corpus/release.jsonl", "--dump", "syn/dump.jsonl", "--archive",
            "syn/archive.jsonl", "--rules", "syn/rules.jsonl", "--out", "rehydrated.jsonl",
        ],
    );
    assert_eq!(
        std::fs::read(dir.join("rehydrated.jsonl")).unwrap(),
        std::fs::read(dir.join("corpus/dataset.jsonl")).unwrap()
    );
}

#[test]
fn taxonomy_maps_a_rules_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-synthetic", "--seed", "3", "--out", "syn"]);
    ok(dir, &["train-taxonomy", "--seed", "1", "--out", "tax"]);
    ok(dir, &["map-rules", "--model", "tax", "--rules", "syn/rules.jsonl", "--out", "mapped.jsonl"]);
    let truth = normvio::corpus::read_rules(std::fs::read(dir.join("syn/rules.jsonl")).unwrap().as_slice()).unwrap();
    let mapped = normvio::corpus::read_rules(std::fs::read(dir.join("mapped.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(mapped.len(), truth.len());
    // the synthetic rules come from the training catalog, so typing recovers them
    let agree = truth
        .iter()
        .filter(|r| mapped.get(&r.subreddit, r.rule_index).unwrap().coarse_types() == r.coarse_types())
        .count();
    assert!(agree * 10 >= truth.len() * 9, "{agree} of {}", truth.len());
    assert!(dir.join("mapped.jsonl.run-manifest.json").exists());
}

#[test]
fn explain_ranks_the_rules_of_the_community() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-synthetic", "--seed", "5", "--out", "syn"]);
    ok(
        dir,
        &["build-corpus", "--dump", "syn/dump.jsonl", "--rules", "syn/rules.jsonl", "--archive", "syn/archive.jsonl", "--out", "corpus"],
    );
    ok(dir, &["build-pairs", "--corpus", "corpus", "--out", "pairs"]);
    ok(dir, &["train-explainer", "--pairs", "pairs", "--seed", "1", "--out", "exp"]);
    let rules = normvio::corpus::read_rules(std::fs::read(dir.join("syn/rules.jsonl")).unwrap().as_slice()).unwrap();
    let sub = rules.subreddits().next().unwrap().to_string();
    std::fs::write(
        dir.join("req.json"),
        serde_json::json!({
            "subreddit": sub,
            "conversation": [
                {"author": "a", "body": "what is everyone playing", "created_utc": 1},
                {"author": "b", "body": "buy cheap followers now", "created_utc": 2}
            ]
        })
        .to_string(),
    )
    .unwrap();
    let out = ok(dir, &["explain", "--model", "exp/rule/seed-1", "--rules", "syn/rules.jsonl", "--input", "req.json"]);
    let ranking: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ranked = ranking["rules"].as_array().unwrap();
    assert_eq!(ranked.len(), rules.rules_for(&sub).len());
    let probs: Vec<f64> = ranked.iter().map(|r| r["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
}
