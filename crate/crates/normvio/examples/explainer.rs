//! Train the rule explainer on (conversation, rule) pairs and rank the rules
//! of one community for a held-out moderated conversation.
//!
//!     cargo run --release --example explainer

use normvio::corpus::{split_dataset, SplitFractions};
use normvio::explainer::{build_training_pairs, train_explainer, ExplainerConfig, PairConfig};
use normvio::synth::{rule_linked, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = rule_linked(ScenarioConfig::default());
    let (ds, rules) = (&scenario.dataset, &scenario.rules);
    let split = split_dataset(ds, SplitFractions::default(), 0);
    let pairs = |part: &[usize]| {
        build_training_pairs(part.iter().map(|&i| &ds.entries[i]), rules, 1, &PairConfig::default())
    };
    let (train, dev) = (pairs(&split.train), pairs(&split.dev));
    println!("{} training pairs: {:?}", train.pairs.len(), train.counters);

    let (model, report) = train_explainer(&train.pairs, &dev.pairs, 1, &ExplainerConfig::default())?;
    println!("trained for {} epochs, threshold {:.2}", report.epochs_run, model.threshold());

    let entry = split
        .test
        .iter()
        .map(|&i| &ds.entries[i])
        .find(|e| e.moderated())
        .ok_or("no moderated conversation in the test split")?;
    let conversation = &entry.conversation;
    println!("\nfinal comment in r/{}: {:?}", conversation.subreddit(), conversation.final_comment.text());
    if let Some(event) = &conversation.moderation_event {
        println!("moderator cited rule(s) {:?}", event.violated_rules());
    }
    for s in model.explain(conversation, rules.rules_for(conversation.subreddit())) {
        println!("  {:.3}  rule {}: {}", s.probability, s.rule.rule_index, s.rule.short_name);
    }
    Ok(())
}
