//! Run reports: a deterministic text rendering of one scenario's outcome —
//! expectation verdicts, event-kind counts, flagged events, and the final
//! reputation table. The same log and snapshot always produce identical
//! report bytes.

use servnet_sim::{EventLog, ExpectationResult, Snapshot};

/// Event kinds surfaced in the "flagged" section of a report.
const FLAGGED_KINDS: &[&str] = &[
    "adversary-fake-notice",
    "adversary-forged-feedback",
    "adversary-impersonation-started",
    "adversary-replayed",
    "adversary-rogue-rotate",
    "adversary-substituted",
    "adversary-tampered",
    "change-notice-ignored",
    "cheating-detected",
    "db-access-denied",
    "feedback-dropped-by-receiver",
    "feedback-rejected",
    "registration-rejected",
    "replay-rejected",
    "rotation-alarm",
    "rotation-rolled-back",
    "seal-rejected",
    "sign-rejected",
];

/// One scenario's rendered outcome.
pub struct RunReport {
    pub scenario: String,
    pub passed: bool,
    pub expectations: Vec<ExpectationResult>,
    pub text: String,
}

pub fn build_report(
    scenario: &str,
    log: &EventLog,
    snapshot: &Snapshot,
    expectations: Vec<ExpectationResult>,
) -> RunReport {
    let passed = expectations.iter().all(|e| e.passed);
    let mut text = String::new();
    text.push_str(&format!("scenario: {scenario}\n"));
    text.push_str(&format!(
        "status: {}\n",
        if passed { "PASS" } else { "FAIL" }
    ));
    text.push_str(&format!("events: {}\n", log.len()));

    text.push_str("\nexpectations:\n");
    if expectations.is_empty() {
        text.push_str("  (none declared)\n");
    }
    for result in &expectations {
        text.push_str(&format!(
            "  [{}] {} (actual {})\n",
            if result.passed { "PASS" } else { "FAIL" },
            result.description,
            result.actual,
        ));
    }

    text.push_str("\nevent counts:\n");
    for (kind, count) in log.kind_counts() {
        text.push_str(&format!("  {kind}: {count}\n"));
    }

    text.push_str("\nflagged events:\n");
    let mut any = false;
    for event in log.events() {
        if FLAGGED_KINDS.contains(&event.kind.as_str()) {
            any = true;
            text.push_str(&format!(
                "  tick {:>5} {} {} {}\n",
                event.tick, event.actor, event.kind, event.payload
            ));
        }
    }
    if !any {
        text.push_str("  (none)\n");
    }

    text.push_str("\nfinal snapshot:\n");
    text.push_str(&snapshot.to_csv());

    RunReport {
        scenario: scenario.to_string(),
        passed,
        expectations,
        text,
    }
}
