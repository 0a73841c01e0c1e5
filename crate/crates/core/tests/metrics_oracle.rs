use normvio_core::evalkit::{aggregate_confusion, macro_f1, tune_threshold, EvalError, PredictionRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (tp, fp, fn, tn) with macro F1 worked out by hand as a fraction.
const CASES: &[((usize, usize, usize, usize), (u64, u64))] = &[
    ((0, 0, 2, 2), (1, 3)),
    ((2, 0, 0, 2), (1, 1)),
    ((1, 1, 1, 1), (1, 2)),
    ((0, 2, 0, 2), (1, 3)),
    ((3, 1, 0, 4), (55, 63)),
    ((0, 0, 0, 5), (1, 2)),
    ((5, 0, 0, 0), (1, 2)),
    ((0, 3, 3, 0), (0, 1)),
    ((1, 0, 3, 0), (1, 5)),
    ((4, 2, 1, 3), (23, 33)),
    ((10, 5, 5, 80), (41, 51)),
    ((1, 0, 0, 9), (1, 1)),
    ((1, 9, 0, 0), (1, 11)),
    ((2, 1, 1, 2), (2, 3)),
    ((7, 3, 2, 8), (299, 399)),
    ((0, 1, 1, 0), (0, 1)),
    ((3, 0, 3, 6), (11, 15)),
    ((6, 6, 0, 0), (1, 3)),
    ((50, 0, 50, 100), (11, 15)),
    ((1, 2, 3, 4), (41, 91)),
    ((9, 1, 1, 9), (9, 10)),
    ((0, 0, 1, 0), (0, 1)),
];

fn expand((tp, fp, fn_, tn): (usize, usize, usize, usize)) -> (Vec<bool>, Vec<bool>) {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (n, p, l) in [(tp, true, true), (fp, true, false), (fn_, false, true), (tn, false, false)] {
        preds.extend(std::iter::repeat_n(p, n));
        labels.extend(std::iter::repeat_n(l, n));
    }
    (preds, labels)
}

#[test]
fn macro_f1_matches_hand_computed_cases() {
    hand_computed_cases();
}

pub fn hand_computed_cases() -> String {
    assert!(CASES.len() >= 20);
    for &(counts, (num, den)) in CASES {
        let (p, l) = expand(counts);
        let got = macro_f1(&p, &l).unwrap();
        let want = num as f64 / den as f64;
        assert!((got - want).abs() < 1e-9, "{counts:?}: {got} vs {num}/{den}");
    }
    let (p, l) = (vec![false; 4], vec![true, true, false, false]);
    assert!((macro_f1(&p, &l).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!(matches!(macro_f1(&p, &l[..3]), Err(EvalError::LengthMismatch { .. })));
    format!("{} hand-computed cases", CASES.len())
}

/// Exact macro F1 at grid point k/100 as a fraction (numerator, denominator).
fn exact_f1_at(scores: &[f64], labels: &[bool], k: u32) -> (u128, u128) {
    let t = f64::from(k) / 100.0;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u128, 0u128, 0u128, 0u128);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= t, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    // each class F1 is 2a / (2a + b); an empty denominator counts as 0/1
    let class = |a: u128, b: u128| if 2 * a + b == 0 { (0, 1) } else { (2 * a, 2 * a + b) };
    let (pn, pd) = class(tp, fp + fn_);
    let (nn, nd) = class(tn, fp + fn_);
    (pn * nd + nn * pd, 2 * pd * nd)
}

fn exhaustive_best(scores: &[f64], labels: &[bool]) -> f64 {
    let mut best_k = 0;
    let mut best = exact_f1_at(scores, labels, 0);
    for k in 1..=100 {
        let f = exact_f1_at(scores, labels, k);
        if f.0 * best.1 > best.0 * f.1 {
            best = f;
            best_k = k;
        }
    }
    f64::from(best_k) / 100.0
}

#[test]
fn tune_threshold_matches_exhaustive_grid() {
    exhaustive_grid();
}

pub fn exhaustive_grid() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(2..60);
        // half the sets sit exactly on grid points to exercise the >= boundary
        let on_grid = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if on_grid {
                    f64::from(rng.random_range(0..=100u32)) / 100.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            assert_eq!(tune_threshold(&scores, &labels), Err(EvalError::SingleClass));
            continue;
        }
        assert_eq!(tune_threshold(&scores, &labels).unwrap(), exhaustive_best(&scores, &labels));
        checked += 1;
    }
    format!("{checked} random score sets")
}

fn record(id: usize, target: &str, label: bool, decision: bool) -> PredictionRecord {
    PredictionRecord {
        example_id: format!("e{id}"),
        target: target.into(),
        score: if decision { 1.0 } else { 0.0 },
        decision,
        label,
        model: "m".into(),
        seed: 0,
        split_seed: 3,
    }
}

proptest! {
    #[test]
    fn macro_f1_ignores_example_order(
        pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..80),
        rotate in 0usize..80,
    ) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let (sp, sl): (Vec<bool>, Vec<bool>) = shuffled.into_iter().unzip();
        prop_assert_eq!(macro_f1(&p, &l).unwrap(), macro_f1(&sp, &sl).unwrap());
    }

    #[test]
    fn tuned_threshold_is_never_beaten_by_a_grid_point(
        items in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 2..50),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = items.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let t = tune_threshold(&scores, &labels).unwrap();
        let k = (t * 100.0).round() as u32;
        let at = exact_f1_at(&scores, &labels, k);
        for g in 0..=100 {
            let f = exact_f1_at(&scores, &labels, g);
            prop_assert!(at.0 * f.1 >= f.0 * at.1);
        }
    }

    #[test]
    fn confusion_cells_sum_to_test_size(
        rows in proptest::collection::vec(proptest::collection::vec((any::<bool>(), any::<bool>()), 3), 1..40),
    ) {
        let targets = ["a", "b", "c"];
        let records: Vec<PredictionRecord> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().zip(targets).map(move |(&(l, d), t)| record(i, t, l, d)))
            .collect();
        let m = aggregate_confusion(&records).unwrap();
        prop_assert_eq!(m.total(), rows.len());
        let violations = rows.iter().filter(|r| r.iter().any(|x| x.0)).count();
        prop_assert_eq!(m.detected_violations + m.missed_violations, violations);
    }
}
