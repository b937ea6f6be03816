//! Evaluates a scenario's declarative expectations against the event log
//! and final snapshot.

use reputation_core::parse_rational;

use crate::log::{EventLog, Snapshot};
use crate::scenario::{Expectation, SnapshotField};

/// One evaluated expectation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationResult {
    pub description: String,
    pub passed: bool,
    pub actual: String,
}

/// Renders a JSON payload value the way expectation filters compare it.
fn render_value(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn evaluate(
    expectations: &[Expectation],
    log: &EventLog,
    snapshot: &Snapshot,
) -> Vec<ExpectationResult> {
    expectations
        .iter()
        .map(|expectation| evaluate_one(expectation, log, snapshot))
        .collect()
}

fn evaluate_one(
    expectation: &Expectation,
    log: &EventLog,
    snapshot: &Snapshot,
) -> ExpectationResult {
    match expectation {
        Expectation::EventCount {
            event,
            actor,
            where_field,
            where_equals,
            op,
            value,
        } => {
            let count = log
                .events()
                .iter()
                .filter(|e| &e.kind == event)
                .filter(|e| actor.as_ref().is_none_or(|a| &e.actor == a))
                .filter(|e| match (where_field, where_equals) {
                    (Some(field), Some(expected)) => {
                        e.payload.get(field).map(render_value).as_deref() == Some(expected)
                    }
                    _ => true,
                })
                .count() as u64;
            let mut description = format!("count({event}");
            if let Some(a) = actor {
                description.push_str(&format!(", actor={a}"));
            }
            if let (Some(f), Some(v)) = (where_field, where_equals) {
                description.push_str(&format!(", {f}={v}"));
            }
            description.push_str(&format!(") {} {}", op.as_str(), value));
            ExpectationResult {
                description,
                passed: op.holds(&count, value),
                actual: count.to_string(),
            }
        }
        Expectation::Snapshot {
            node,
            field,
            op,
            value,
        } => {
            let description = format!("snapshot[{node}].{field:?} {} {value}", op.as_str());
            let Some(row) = snapshot.row(&reputation_core::ServerId::new(node.as_str())) else {
                return ExpectationResult {
                    description,
                    passed: false,
                    actual: "<absent>".to_string(),
                };
            };
            match field {
                SnapshotField::Authority => {
                    let actual = row.authority.as_str().to_string();
                    ExpectationResult {
                        passed: op.holds(&actual, value),
                        actual,
                        description,
                    }
                }
                SnapshotField::Transactions => match value.parse::<u64>() {
                    Ok(expected) => ExpectationResult {
                        passed: op.holds(&row.transactions, &expected),
                        actual: row.transactions.to_string(),
                        description,
                    },
                    Err(_) => ExpectationResult {
                        description,
                        passed: false,
                        actual: "<bad expectation value>".to_string(),
                    },
                },
                SnapshotField::Gr | SnapshotField::Pos | SnapshotField::Neg => {
                    let actual = match field {
                        SnapshotField::Gr => &row.gr,
                        SnapshotField::Pos => &row.pos,
                        _ => &row.neg,
                    };
                    match parse_rational(value) {
                        Ok(expected) => ExpectationResult {
                            passed: op.holds(actual, &expected),
                            actual: reputation_core::to_decimal_string(actual, 6),
                            description,
                        },
                        Err(_) => ExpectationResult {
                            description,
                            passed: false,
                            actual: "<bad expectation value>".to_string(),
                        },
                    }
                }
            }
        }
    }
}
