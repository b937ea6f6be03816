//! Append-only event log and its byte-stable exports: JSON Lines for events
//! and CSV for reputation snapshots. Identical seeds and scripts produce
//! byte-identical output.

use serde::Serialize;
use serde_json::Value;

use reputation_core::{to_decimal_string, to_ratio_string, Rational, ScoreLedger, ServerId};

/// One log entry, totally ordered by `(tick, seq)`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Event {
    pub tick: u64,
    pub seq: u64,
    pub actor: String,
    pub kind: String,
    pub payload: Value,
}

/// The whole run's log.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tick: u64, seq: u64, actor: &ServerId, kind: &str, payload: Value) {
        self.events.push(Event {
            tick,
            seq,
            actor: actor.as_str().to_string(),
            kind: kind.to_string(),
            payload,
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events of one kind, in order.
    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.of_kind(kind).count()
    }

    /// One JSON object per line; field order fixed, map keys sorted.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Counts per event kind, sorted by kind.
    pub fn kind_counts(&self) -> Vec<(String, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for event in &self.events {
            *counts.entry(event.kind.clone()).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }
}

/// One row of the reputation snapshot, read through the database server.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub server: ServerId,
    pub transactions: u64,
    pub pos: Rational,
    pub neg: Rational,
    pub gr: Rational,
    pub authority: ServerId,
}

/// Final (or mid-run) reputation table, sorted by server id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub rows: Vec<SnapshotRow>,
}

impl Snapshot {
    pub fn row(&self, server: &ServerId) -> Option<&SnapshotRow> {
        self.rows.iter().find(|r| &r.server == server)
    }

    /// CSV export with the fixed header, values to six decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("server,T,POS,NEG,GR,authority\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.server,
                row.transactions,
                to_decimal_string(&row.pos, 6),
                to_decimal_string(&row.neg, 6),
                to_decimal_string(&row.gr, 6),
                row.authority,
            ));
        }
        out
    }
}

/// Payload fragment describing a ledger after an update, with exact values.
pub fn ledger_payload(ledger: &ScoreLedger) -> Value {
    serde_json::json!({
        "t": ledger.transactions(),
        "pos": to_ratio_string(ledger.pos_accum()),
        "neg": to_ratio_string(ledger.neg_accum()),
        "gr": to_ratio_string(reputation_core::global_reputation(ledger).as_rational()),
    })
}
