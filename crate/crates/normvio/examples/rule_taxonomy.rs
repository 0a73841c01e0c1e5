//! Train the fine-grained rule-type scorers on the built-in catalog and
//! type a few free-form community rules.
//!
//!     cargo run --release --example rule_taxonomy

use normvio::taxonomy::{builtin_catalog, classify_rule, coarsen, RuleClassifierConfig, RuleTypeModel};

const RULES: [&str; 4] = [
    "Be kind. Personal attacks and name calling will be removed.",
    "No self-promotion, referral links or selling.",
    "Use the correct flair and put spoilers behind tags.",
    "Posts must be about board games.",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = builtin_catalog();
    println!("training on {} annotated rules", catalog.len());
    let model = RuleTypeModel::train(&catalog, &RuleClassifierConfig::default(), 1)?;

    for text in RULES {
        let fine = classify_rule(text, &model, model.threshold);
        let coarse = coarsen(fine.iter());
        println!("{text}\n  fine: {fine:?}\n  coarse: {coarse:?}");
    }
    Ok(())
}
