//! Run the triage service in process: score two conversations, read the
//! queue, record a moderator decision, and replay the decision log.
//!
//!     cargo run --release --example triage
//!
//! `normvio serve` exposes the same calls over HTTP under /v1.

use std::sync::Arc;

use normvio::corpus::{split_dataset, SplitFractions};
use normvio::explainer::{build_training_pairs, train_explainer, ExplainerConfig, PairConfig};
use normvio::service::{
    read_log, DecisionAction, DecisionRequest, ModelScorer, QueueState, ScoreRequest, Triage, UtteranceIn,
};
use normvio::synth::{rule_linked, ScenarioConfig, TOPIC_KEYWORDS};

fn request(subreddit: &str, reply: &str) -> ScoreRequest {
    let u = |author: &str, body: &str, t| UtteranceIn {
        author: author.into(),
        body: body.into(),
        created_utc: t,
    };
    ScoreRequest {
        subreddit: subreddit.into(),
        conversation: vec![u("op", "what should i plant this spring", 1), u("guest", reply, 2)],
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = rule_linked(ScenarioConfig::default());
    let split = split_dataset(&scenario.dataset, SplitFractions::default(), 0);
    let pairs = build_training_pairs(
        split.train.iter().map(|&i| &scenario.dataset.entries[i]),
        &scenario.rules,
        1,
        &PairConfig::default(),
    );
    let (explainer, _) = train_explainer(&pairs.pairs, &[], 1, &ExplainerConfig::default())?;

    let dir = tempfile::tempdir()?;
    let log_path = dir.path().join("decisions.jsonl");
    let triage = Triage::builder(scenario.rules.clone())
        .scorer(Arc::new(ModelScorer {
            explainer: Some(explainer),
            detectors: vec![],
        }))
        .log_file(&log_path)?
        .build()?;

    // The explainer answers which rule a removed comment broke; it assumes
    // a violation. Rule k of alpha bans TOPIC_KEYWORDS[k - 1].
    let replies: Vec<String> = [2, 5]
        .iter()
        .map(|&k| format!("honestly {} is all i think about", TOPIC_KEYWORDS[k]))
        .collect();
    for reply in &replies {
        let resp = triage.score(&request("alpha", reply))?;
        let top = &resp.predictions[0];
        println!(
            "{reply:?}: top rule {} at {:.3}, queued as {:?}",
            top.rule_index, top.probability, resp.item_id
        );
    }

    let page = triage.queue(None, None)?;
    println!("\n{} item(s) pending", page.items.len());
    if let Some(item) = page.items.first() {
        let decided = triage.decide(&DecisionRequest {
            item_id: item.item_id.clone(),
            action: DecisionAction::Remove,
            rule_index: Some(item.predictions[0].rule_index),
            actor: "mod-alice".into(),
        })?;
        println!("{} -> {:?}", decided.item_id, decided.decision);
    }

    // the log alone rebuilds the queue
    let records = read_log(std::io::BufReader::new(std::fs::File::open(&log_path)?))?;
    let replayed = QueueState::replay(&records)?;
    assert_eq!(replayed.items(), &triage.snapshot());
    println!("{} log records replay to the live queue", records.len());
    Ok(())
}
