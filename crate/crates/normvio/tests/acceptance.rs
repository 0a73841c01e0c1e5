//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The checks live next to the library tests they extend and are compiled
//! in here unchanged; this runner only times them and reports.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/pipeline_oracle.rs"]
mod pipeline_oracle;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/mapping.rs"]
mod mapping;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/metrics_oracle.rs"]
mod metrics_oracle;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/pairs.rs"]
mod pairs;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/models.rs"]
mod models;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/gradients.rs"]
mod gradients;

#[allow(dead_code, unused_imports)]
#[path = "../../core/tests/corpus_props.rs"]
mod corpus_props;

#[allow(dead_code, unused_imports)]
#[path = "../../service/tests/replay.rs"]
mod replay;

#[allow(dead_code, unused_imports)]
#[path = "../../service/tests/contract.rs"]
mod contract;

const MODEL_BUDGET: Duration = Duration::from_secs(15 * 60);

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "check panicked".to_string())
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

/// Runs `parts` in order; the criterion passes when none panics.
fn criterion(name: &str, parts: Vec<Box<dyn FnOnce() -> String + '_>>) -> bool {
    let started = Instant::now();
    let mut details = Vec::new();
    for part in parts {
        match catch_unwind(AssertUnwindSafe(part)) {
            Ok(d) => details.push(d),
            Err(p) => {
                println!("FAIL  {name}: {} [{:.1?}]", panic_message(&*p), started.elapsed());
                return false;
            }
        }
    }
    println!("PASS  {name}: {} [{:.1?}]", details.join("; "), started.elapsed());
    true
}

fn block_on<F: std::future::Future<Output = String>>(f: F) -> String {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(f)
}

fn main() -> ExitCode {
    // keep panic output to the single FAIL line
    std::panic::set_hook(Box::new(|_| {}));
    let mut results = Vec::new();

    results.push(criterion(
        "pipeline oracle equivalence",
        vec![Box::new(pipeline_oracle::pipeline_oracle)],
    ));
    results.push(criterion(
        "mapping exactness",
        vec![
            Box::new(mapping::table_agreement),
            Box::new(|| mapping::union_homomorphism(1000)),
        ],
    ));
    results.push(criterion(
        "metric oracle",
        vec![
            Box::new(metrics_oracle::hand_computed_cases),
            Box::new(metrics_oracle::exhaustive_grid),
        ],
    ));
    results.push(criterion(
        "augmented-pair construction",
        vec![Box::new(|| pairs::augmented_pairs(48))],
    ));
    results.push(criterion(
        "negative-sampling soundness",
        vec![Box::new(|| pairs::mismatched_soundness(1000))],
    ));

    let models_started = Instant::now();
    results.push(criterion(
        "model sanity",
        vec![
            Box::new(models::detector_memorization),
            Box::new(models::explainer_memorization),
            Box::new(gradients::head_gradients),
            Box::new(|| {
                let spent = models_started.elapsed();
                assert!(spent < MODEL_BUDGET, "model checks took {spent:?}");
                format!("CPU time {spent:.1?} within {MODEL_BUDGET:?}")
            }),
        ],
    ));
    results.push(criterion(
        "separable-synthetic learning",
        vec![Box::new(models::community_margin), Box::new(models::history_margin)],
    ));
    results.push(criterion(
        "baseline harness",
        vec![Box::new(models::format_recall)],
    ));
    results.push(criterion(
        "privacy",
        vec![Box::new(corpus_props::release_privacy)],
    ));
    results.push(criterion(
        "service",
        vec![
            Box::new(|| block_on(replay::replay_session())),
            Box::new(|| block_on(contract::contract_suite())),
        ],
    ));

    let failed = results.iter().filter(|r| !**r).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
