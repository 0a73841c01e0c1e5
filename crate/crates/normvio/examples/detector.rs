//! Train comment-only and community-aware detectors on a scenario where the
//! same phrase is a violation in one community and banter in another.
//!
//!     cargo run --release --example detector

use normvio::corpus::{split_dataset, SplitFractions};
use normvio::detector::{predict_split, train_detector, DetectorConfig, DetectorVariant};
use normvio::evalkit::BinaryCounts;
use normvio::synth::{community_conditional, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = community_conditional(ScenarioConfig::default());
    let ds = &scenario.dataset;
    let split = split_dataset(ds, SplitFractions::default(), 0);
    println!(
        "{} conversations, {} train / {} dev / {} test",
        ds.len(),
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );

    for variant in [DetectorVariant::Comment, DetectorVariant::Community] {
        let (model, report) = train_detector(scenario.coarse_type, variant, ds, &split, 1, &DetectorConfig::default())?;
        let records = predict_split(&model, ds, &split.test, scenario.coarse_type, split.seed);
        let preds: Vec<bool> = records.iter().map(|r| r.decision).collect();
        let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
        let counts = BinaryCounts::from_pairs(&preds, &labels)?;
        println!(
            "{variant:<10} epochs {:>2}  threshold {:.2}  test macro-F1 {:.3}",
            report.epochs_run,
            model.threshold(),
            counts.macro_f1()
        );
    }
    Ok(())
}
