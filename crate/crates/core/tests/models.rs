use normvio_core::corpus::{build_corpus, split_dataset, BuildConfig, DataSplit, Dataset, SplitFractions};
use normvio_core::detector::{predict_split, train_detector, DetectorConfig, DetectorVariant};
use normvio_core::evalkit::{baseline_incivil_hate, BinaryCounts};
use normvio_core::explainer::{
    build_augmented_eval, build_training_pairs, train_explainer, ExplainerConfig, ExplainerVariant, PairConfig,
};
use normvio_core::synth::{community_conditional, generate, history_only, overfit_set, rule_linked, ScenarioConfig, SyntheticConfig};
use normvio_core::taxonomy::CoarseRuleType;

fn whole(ds: &Dataset) -> DataSplit {
    DataSplit {
        seed: 0,
        train: (0..ds.len()).collect(),
        dev: vec![],
        test: (0..ds.len()).collect(),
    }
}

fn f1(records: &[normvio_core::evalkit::PredictionRecord]) -> f64 {
    let preds: Vec<bool> = records.iter().map(|r| r.decision).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
    BinaryCounts::from_pairs(&preds, &labels).unwrap().macro_f1()
}

#[test]
fn every_detector_variant_memorizes_the_overfit_set() {
    println!("{}", detector_memorization());
}

pub fn detector_memorization() -> String {
    let mut out = Vec::new();
    let s = overfit_set(11);
    let split = whole(&s.dataset);
    for v in DetectorVariant::ALL {
        let (model, report) = train_detector(
            CoarseRuleType::Incivility,
            v,
            &s.dataset,
            &split,
            3,
            &DetectorConfig::default(),
        )
        .unwrap();
        let recs = predict_split(&model, &s.dataset, &split.test, CoarseRuleType::Incivility, 0);
        let score = f1(&recs);
        assert!(score >= 0.95, "{v}: {score}");
        assert!(report.epochs_run <= 10);
        out.push(format!("{v} {score:.3}"));
    }
    format!("train F1 {}", out.join(", "))
}

#[test]
fn explainer_memorizes_fifty_pairs() {
    println!("{}", explainer_memorization());
}

pub fn explainer_memorization() -> String {
    let mut out = Vec::new();
    let s = overfit_set(12);
    let pairs = build_training_pairs(&s.dataset.entries, &s.rules, 1, &PairConfig::default()).pairs;
    let pairs: Vec<_> = pairs.into_iter().take(50).collect();
    for v in ExplainerVariant::ALL {
        let cfg = ExplainerConfig {
            variant: v,
            ..ExplainerConfig::default()
        };
        let (model, report) = train_explainer(&pairs, &[], 5, &cfg).unwrap();
        let recs = model.predict_pairs(&pairs, 0);
        let score = f1(&recs);
        assert!(score >= 0.95, "{v}: {score}");
        assert!(report.epochs_run <= 10);
        out.push(format!("{v} {score:.3}"));
    }
    format!("{} pairs, train F1 {}", pairs.len(), out.join(", "))
}

fn held_out_f1(ds: &Dataset, t: CoarseRuleType, v: DetectorVariant, seed: u64) -> f64 {
    let split = split_dataset(ds, SplitFractions::default(), seed);
    let (model, _) = train_detector(t, v, ds, &split, seed, &DetectorConfig::default()).unwrap();
    f1(&predict_split(&model, ds, &split.test, t, split.seed))
}

#[test]
fn community_context_helps_on_conditional_markers() {
    println!("{}", community_margin());
}

pub fn community_margin() -> String {
    let mut margins = Vec::new();
    for seed in 0..3 {
        let s = community_conditional(ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        });
        let comment = held_out_f1(&s.dataset, s.coarse_type, DetectorVariant::Comment, seed);
        let community = held_out_f1(&s.dataset, s.coarse_type, DetectorVariant::Community, seed);
        assert!(community - comment >= 0.05, "seed {seed}: comment {comment:.3} community {community:.3}");
        margins.push(format!("{:+.3}", community - comment));
    }
    format!("community minus comment F1 per seed: {}", margins.join(" "))
}

#[test]
fn history_helps_when_markers_precede_the_reply() {
    println!("{}", history_margin());
}

pub fn history_margin() -> String {
    let mut margins = Vec::new();
    for seed in 0..3 {
        let s = history_only(ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        });
        let comment = held_out_f1(&s.dataset, s.coarse_type, DetectorVariant::Comment, seed);
        let history = held_out_f1(&s.dataset, s.coarse_type, DetectorVariant::History, seed);
        assert!(history - comment >= 0.05, "seed {seed}: comment {comment:.3} history {history:.3}");
        margins.push(format!("{:+.3}", history - comment));
    }
    format!("history minus comment F1 per seed: {}", margins.join(" "))
}

fn synthetic_dataset(seed: u64, second_rule_rate: f64) -> (Dataset, normvio_core::corpus::RuleBook) {
    let corpus = generate(&SyntheticConfig {
        seed,
        second_rule_rate,
        ..SyntheticConfig::default()
    });
    let mut store = corpus.store();
    let archive = corpus.archive_client();
    let built = build_corpus(&mut store, &corpus.rules, Some(&archive), &BuildConfig::default()).unwrap();
    (built.dataset, corpus.rules)
}

fn explainer_held_out(seed: u64) -> (f64, f64) {
    let s = rule_linked(ScenarioConfig {
        seed,
        moderated: 1000,
        ..ScenarioConfig::default()
    });
    let (ds, rules) = (s.dataset, s.rules);
    let split = split_dataset(&ds, SplitFractions::default(), seed);
    let pairs = |part: &[usize]| build_training_pairs(part.iter().map(|&i| &ds.entries[i]), &rules, seed, &PairConfig::default()).pairs;
    let (train, dev, test) = (pairs(&split.train), pairs(&split.dev), pairs(&split.test));
    let (model, _) = train_explainer(&train, &dev, seed, &ExplainerConfig::default()).unwrap();
    let held_out = f1(&model.predict_pairs(&test, split.seed));
    let aug = build_augmented_eval(split.test.iter().map(|&i| &ds.entries[i]), &rules);
    let augmented = f1(&model.predict_pairs(&aug.pairs, split.seed));
    (held_out, augmented)
}

#[test]
fn explainer_separates_marker_pairs_on_held_out_data() {
    let runs: Vec<(f64, f64)> = (1..=3).map(explainer_held_out).collect();
    for (i, (h, a)) in runs.iter().enumerate() {
        println!("seed {}: held-out pairs {h:.3}, augmented {a:.3}", i + 1);
    }
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / runs.len() as f64;
    assert!(mean >= 0.95, "mean held-out F1 {mean}");
}

#[test]
fn incivil_hate_baseline_misses_format_violations() {
    println!("{}", format_recall());
}

pub fn format_recall() -> String {
    let (ds, _) = synthetic_dataset(9, 0.0);
    let split = split_dataset(&ds, SplitFractions::default(), 9);
    let report = baseline_incivil_hate(&ds, &split, DetectorVariant::Comment, 9, &DetectorConfig::default()).unwrap();
    let format = report.score("incivil-hate", "Format").unwrap();
    let incivility = report.score("incivil-hate", "Incivility").unwrap();
    assert!(format.counts.recall() <= 0.2, "{}", format.counts.recall());
    assert!(incivility.counts.recall() >= 0.8);
    format!(
        "Format recall {:.3}, Incivility recall {:.3}",
        format.counts.recall(),
        incivility.counts.recall()
    )
}
