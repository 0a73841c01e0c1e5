//! Score detector predictions the way the report does: macro-F1 per seed,
//! mean with a confidence interval, pooled confusion, plus the majority
//! baseline for comparison. Also shows dev-set threshold tuning.
//!
//!     cargo run --release --example evaluation

use normvio::corpus::{build_corpus, split_dataset, BuildConfig, SplitFractions};
use normvio::detector::{predict_split, train_detector, DetectorConfig, DetectorVariant};
use normvio::evalkit::{baseline_majority, build_report, macro_f1_at, tune_threshold};
use normvio::synth::{generate, SyntheticConfig};
use normvio::taxonomy::CoarseRuleType;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synthetic = generate(&SyntheticConfig::default());
    let mut store = synthetic.store();
    let archive = synthetic.archive_client();
    let ds = build_corpus(&mut store, &synthetic.rules, Some(&archive), &BuildConfig::default())?.dataset;
    let split = split_dataset(&ds, SplitFractions::default(), 0);
    let t = CoarseRuleType::Incivility;

    let mut records = Vec::new();
    for seed in 1..=3 {
        let (model, _) = train_detector(t, DetectorVariant::Comment, &ds, &split, seed, &DetectorConfig::default())?;
        records.extend(predict_split(&model, &ds, &split.test, t, split.seed));

        if seed == 1 {
            let dev = predict_split(&model, &ds, &split.dev, t, split.seed);
            let scores: Vec<f64> = dev.iter().map(|r| r.score).collect();
            let labels: Vec<bool> = dev.iter().map(|r| r.label).collect();
            let best = tune_threshold(&scores, &labels)?;
            println!(
                "dev macro-F1 {:.3} at 0.50, {:.3} at tuned {best:.2}",
                macro_f1_at(&scores, &labels, 0.5)?,
                macro_f1_at(&scores, &labels, best)?
            );
        }
    }

    let report = build_report("incivility detector", &records)?;
    println!("\n{}", report.render_table());
    let majority = baseline_majority(&ds, &split)?;
    println!("{}", majority.render_table());
    Ok(())
}
