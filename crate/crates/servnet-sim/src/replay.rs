//! Event-stream replay oracle: reconstructs every ledger from the log's
//! feedback-outcome events alone, using the reputation algebra in isolation.
//! Independent of the simulator's live bookkeeping, it is the check that the
//! snapshot table is exactly the fold of the logged outcomes.

use std::collections::BTreeMap;

use reputation_core::{
    apply_feedback, new_ledger, parse_rational, record_unscored_transaction, GlobalReputation,
    LocalScore, ScoreLedger, ServerId, WeightMode,
};

use crate::log::EventLog;

/// Replays all ledger-touching outcomes in log order.
///
/// Nodes that never received feedback are absent from the result; callers
/// treat missing entries as fresh ledgers.
pub fn replay_ledgers(log: &EventLog) -> Result<BTreeMap<ServerId, ScoreLedger>, String> {
    let mut ledgers: BTreeMap<ServerId, ScoreLedger> = BTreeMap::new();
    for event in log
        .events()
        .iter()
        .filter(|e| e.kind == "feedback-outcome" || e.kind == "cheating-penalty-applied")
    {
        if event.kind == "cheating-penalty-applied" {
            // The optional giver penalty: a unit-weight -1.
            let scorer = event.payload["scorer"]
                .as_str()
                .ok_or("penalty missing scorer")?;
            let scorer_id = ServerId::new(scorer);
            let ledger = ledgers
                .entry(scorer_id.clone())
                .or_insert_with(|| new_ledger(scorer_id.clone()));
            *ledger = apply_feedback(
                ledger,
                LocalScore::Negative,
                &GlobalReputation::from_integer(1),
                WeightMode::Unit,
            );
            continue;
        }
        let payload = &event.payload;
        let target = payload["target"]
            .as_str()
            .ok_or("feedback-outcome missing target")?;
        let outcome = payload["outcome"]
            .as_str()
            .ok_or("feedback-outcome missing outcome")?;
        let target_id = ServerId::new(target);
        let ledger = ledgers
            .entry(target_id.clone())
            .or_insert_with(|| new_ledger(target_id.clone()));
        let next = match outcome {
            "giver-cheating-flagged" => record_unscored_transaction(ledger),
            "accepted" | "receiver-dropped-recovered" => {
                let score = payload["score"]
                    .as_i64()
                    .ok_or("feedback-outcome missing score")?;
                let score = LocalScore::from_value(score as i8).map_err(|e| e.to_string())?;
                let weight = payload["weight"]
                    .as_str()
                    .ok_or("feedback-outcome missing weight")?;
                let weight = parse_rational(weight)?;
                let mode = match payload["mode"].as_str() {
                    Some("unit") => WeightMode::Unit,
                    Some("reputation-weighted") => WeightMode::ReputationWeighted,
                    other => return Err(format!("unknown weight mode {other:?}")),
                };
                let scorer_rep =
                    GlobalReputation::from_rational(weight).map_err(|e| e.to_string())?;
                apply_feedback(ledger, score, &scorer_rep, mode)
            }
            other => return Err(format!("unexpected outcome kind {other:?}")),
        };
        *ledger = next;
    }
    Ok(ledgers)
}
