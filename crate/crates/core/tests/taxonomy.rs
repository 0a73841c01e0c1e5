use std::collections::BTreeSet;

use normvio_core::taxonomy::{
    builtin_catalog, classify_rule, coarsen, crossval_rule_classifier, AnnotatedRule,
    CoarseRuleType, FineRuleType, RuleClassifierConfig, RuleTypeModel,
};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn catalog_model() -> RuleTypeModel {
    RuleTypeModel::train(&builtin_catalog(), &RuleClassifierConfig::default(), 11).unwrap()
}

#[test]
fn catalog_model_maps_hate_speech_example() {
    let model = catalog_model();
    let types = classify_rule("No racism, sexism", &model, 0.5);
    assert!(types.contains(&FineRuleType::HateSpeech), "{types:?}");
    assert!(coarsen(&types).contains(&CoarseRuleType::HateSpeech));
    // totality on empty input
    let _ = classify_rule("", &model, 0.5);
}

#[test]
fn catalog_model_round_trips_through_disk() {
    let model = catalog_model();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let loaded = RuleTypeModel::load(dir.path()).unwrap();
    let text = "Be civil and respectful to other users";
    assert_eq!(model.scores(text), loaded.scores(text));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn raising_threshold_never_adds_a_type(lo in 0.0f64..1.0, hi in 0.0f64..1.0, idx in 0usize..105) {
        static MODEL: std::sync::OnceLock<RuleTypeModel> = std::sync::OnceLock::new();
        let model = MODEL.get_or_init(catalog_model);
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let text = builtin_catalog()[idx].text();
        let at_hi = classify_rule(&text, model, hi);
        let at_lo = classify_rule(&text, model, lo);
        prop_assert!(at_hi.is_subset(&at_lo));
    }
}

fn marker_rules(n: usize, seed: u64, shuffle_labels: bool) -> Vec<AnnotatedRule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["topic", "posts", "comments", "users", "threads", "links", "titles", "images"];
    let mut rules = Vec::new();
    for i in 0..n {
        let filler: Vec<&str> = (0..5).map(|_| *words.choose(&mut rng).unwrap()).collect();
        let positive = i % 2 == 0;
        let text = if positive {
            format!("no glimmerwick {} allowed {i}", filler.join(" "))
        } else {
            format!("keep {} tidy {i}", filler.join(" "))
        };
        rules.push(AnnotatedRule::new(text, [if positive { FineRuleType::Voting } else { FineRuleType::Format }]));
    }
    if shuffle_labels {
        let mut labels: Vec<BTreeSet<FineRuleType>> = rules.iter().map(|r| r.fine_types.clone()).collect();
        labels.shuffle(&mut rng);
        for (r, l) in rules.iter_mut().zip(labels) {
            r.fine_types = l;
        }
    }
    rules
}

#[test]
fn crossval_on_separable_markers_is_perfect() {
    let report = crossval_rule_classifier(
        FineRuleType::Voting,
        &marker_rules(60, 1, false),
        10,
        &RuleClassifierConfig::default(),
        3,
    )
    .unwrap();
    assert_eq!(report.fold_macro_f1.len(), 10);
    assert_eq!(report.mean_macro_f1, 1.0);
    assert_eq!(report.std_macro_f1, 0.0);
}

#[test]
fn crossval_on_shuffled_labels_is_near_chance() {
    let report = crossval_rule_classifier(
        FineRuleType::Voting,
        &marker_rules(200, 2, true),
        10,
        &RuleClassifierConfig::default(),
        3,
    )
    .unwrap();
    assert!((report.mean_macro_f1 - 0.5).abs() <= 0.1, "{report:?}");
}


#[test]
fn marker_scorer_separates_held_out_rules() {
    use normvio_core::evalkit::metrics::BinaryCounts;
    use normvio_core::taxonomy::train_rule_classifier;
    let train = marker_rules(40, 5, false);
    let held_out: Vec<AnnotatedRule> = marker_rules(100, 6, false).into_iter().skip(40).collect();
    let scorer = train_rule_classifier(FineRuleType::Voting, &train, &RuleClassifierConfig::default(), 2).unwrap();
    let (preds, gold): (Vec<bool>, Vec<bool>) = held_out
        .iter()
        .map(|r| (scorer.score(&r.text()) >= 0.5, r.has(FineRuleType::Voting)))
        .unzip();
    let counts = BinaryCounts::from_pairs(&preds, &gold).unwrap();
    assert!(counts.positive_f1() >= 0.95, "{counts:?}");
}
