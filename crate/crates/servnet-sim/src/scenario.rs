//! Scenario scripts: the declarative description of nodes, policies,
//! adversaries, scheduled events, and expected outcomes that drives one
//! deterministic simulation. Scripts are TOML files mirroring these structs
//! field for field; see `docs/scenarios.md`.

use serde::Deserialize;

use reputation_core::{parse_rational, Rational, WeightMode};

/// Top-level scenario script.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    pub seed: u64,
    /// Last tick the run processes.
    pub until: u64,
    /// Election period in ticks; 0 disables elections.
    #[serde(default = "default_election_period")]
    pub election_period: u64,
    /// Contender must exceed `factor * incumbent` to take over.
    #[serde(default = "default_authority_factor")]
    pub authority_factor: String,
    #[serde(default = "default_weight_mode")]
    pub weight_mode: String,
    /// Ticks the authority waits for the forwarded feedback copy after the
    /// first copy arrives.
    #[serde(default = "default_feedback_timeout")]
    pub feedback_timeout: u64,
    /// Per-link message delay in ticks.
    #[serde(default = "default_link_delay")]
    pub link_delay: u64,
    /// When a giver is caught sending conflicting scores, also hand a
    /// unit-weight -1 to its own authority. Off by default: the detection
    /// itself carries no sanction.
    #[serde(default)]
    pub penalize_cheating_giver: bool,
    /// How many initial authorities to draw by seed when no node pins an
    /// authority role.
    #[serde(default)]
    pub authorities: Option<u32>,
    #[serde(default)]
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub trades: Vec<TradeDecl>,
    #[serde(default)]
    pub revocations: Vec<RevocationDecl>,
    #[serde(default)]
    pub adversaries: Vec<AdversaryAction>,
    #[serde(default)]
    pub vulnerabilities: Vulnerabilities,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

fn default_election_period() -> u64 {
    100
}

fn default_authority_factor() -> String {
    "1/2".to_string()
}

fn default_weight_mode() -> String {
    "reputation-weighted".to_string()
}

fn default_feedback_timeout() -> u64 {
    10
}

fn default_link_delay() -> u64 {
    1
}

/// One declared node.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDecl {
    pub id: String,
    /// "authority" or "leaf"; unset leaves the choice to the seeded draw.
    #[serde(default)]
    pub role: Option<String>,
    /// Pins a leaf to a specific authority.
    #[serde(default)]
    pub authority: Option<String>,
    /// Tick at which the node registers; 0 or absent means it is part of
    /// the initial roster.
    #[serde(default)]
    pub joins_at: Option<u64>,
    /// Chosen authority for a late join; defaults to a seeded draw.
    #[serde(default)]
    pub via: Option<String>,
    #[serde(default = "default_honesty")]
    pub honesty: String,
    /// Fails every n-th held share; only for honesty = "fail-every-nth".
    #[serde(default)]
    pub fail_period: Option<u64>,
    /// Minimum peer reputation to accept a trade (rational string).
    #[serde(default = "default_threshold")]
    pub accept_threshold: String,
    /// Accept peers with zero transactions regardless of threshold.
    #[serde(default)]
    pub newcomer_grace: bool,
    #[serde(default = "default_capacity")]
    pub capacity: u64,
}

fn default_honesty() -> String {
    "honest".to_string()
}

fn default_threshold() -> String {
    "0".to_string()
}

fn default_capacity() -> u64 {
    1 << 20
}

/// Node behavior profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Honesty {
    Honest,
    /// Every held share is lost at expiry.
    FailContracts,
    /// Every n-th held share is lost at expiry.
    FailEveryNth(u64),
    /// Fails its contracts and then drops the resulting negative feedback
    /// instead of forwarding it to its authority.
    DropFeedback,
    /// Sends +1 via the receiver and -1 directly to its authority.
    FalseScorer,
}

/// One scheduled trade.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeDecl {
    pub tick: u64,
    pub initiator: String,
    pub responder: String,
    pub share_size: u64,
    pub duration: u64,
    /// Responder's counter params; default to the initiator's.
    #[serde(default)]
    pub responder_share_size: Option<u64>,
    #[serde(default)]
    pub responder_duration: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationDecl {
    pub tick: u64,
    pub node: String,
}

/// Scripted adversary actions, one per analyzed attack.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryAction {
    /// Interpose on the victim-target link, originate a contract as the
    /// victim, and try to bind it without the victim's key.
    Impersonate {
        victim: String,
        target: String,
        at_tick: u64,
        share_size: u64,
        duration: u64,
    },
    /// Rewrite a field of the first contract proposal crossing the link at
    /// or after `from_tick`.
    MitmTamper {
        a: String,
        b: String,
        from_tick: u64,
        field: TamperField,
        value: u64,
    },
    /// Capture the n-th message of a given kind on the link and re-inject
    /// the identical bytes later.
    Replay {
        a: String,
        b: String,
        capture: String,
        #[serde(default = "default_occurrence")]
        occurrence: u32,
        replay_at: u64,
    },
    /// Capture the first binding hash on the link and substitute it for the
    /// next one (replaying message 10 into a fresh session).
    SubstituteBinding { a: String, b: String },
    /// Observe a transaction on the link, then send feedback signed with the
    /// adversary's own key while claiming to be `as_scorer`.
    ForgeFeedback {
        as_scorer: String,
        target: String,
        at_tick: u64,
        score: i8,
    },
    /// Send an authority-change notice signed by `actor` instead of the
    /// database server.
    FakeAuthorityNotice {
        actor: String,
        claimed_new: String,
        claimed_old: String,
        at_tick: u64,
    },
    /// An ordinary peer attempts the rotation handshake without the subtree
    /// key.
    RogueRotateInit { actor: String, at_tick: u64 },
}

fn default_occurrence() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperField {
    ShareSize,
    Duration,
}

/// Negative-control knobs; all default off.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vulnerabilities {
    #[serde(default)]
    pub disable_nonce_cache: bool,
    #[serde(default)]
    pub disable_transcript_check: bool,
}

/// Declarative pass/fail predicates over the event log and final snapshot.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Expectation {
    /// Compare the number of matching events against `value`.
    EventCount {
        event: String,
        #[serde(default)]
        actor: Option<String>,
        /// Optional payload-field filter: count only events whose payload
        /// field renders equal to this value.
        #[serde(default)]
        where_field: Option<String>,
        #[serde(default)]
        where_equals: Option<String>,
        op: CmpOp,
        value: u64,
    },
    /// Compare a final-snapshot column for one node.
    Snapshot {
        node: String,
        field: SnapshotField,
        op: CmpOp,
        value: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmpOp {
    Eq,
    Ne,
    Ge,
    Le,
    Gt,
    Lt,
}

impl CmpOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
        }
    }

    pub fn holds<T: Ord>(&self, left: &T, right: &T) -> bool {
        match self {
            CmpOp::Eq => left == right,
            CmpOp::Ne => left != right,
            CmpOp::Ge => left >= right,
            CmpOp::Le => left <= right,
            CmpOp::Gt => left > right,
            CmpOp::Lt => left < right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotField {
    Gr,
    Transactions,
    Pos,
    Neg,
    Authority,
}

/// Script-level validation errors, each naming the offending entry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid scenario: {}", issues.join("; "))]
pub struct ScriptError {
    pub issues: Vec<String>,
}

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn weight_mode(&self) -> Result<WeightMode, String> {
        match self.weight_mode.as_str() {
            "unit" => Ok(WeightMode::Unit),
            "reputation-weighted" => Ok(WeightMode::ReputationWeighted),
            other => Err(format!("unknown weight mode {other:?}")),
        }
    }

    pub fn factor(&self) -> Result<Rational, String> {
        parse_rational(&self.authority_factor)
    }

    /// Structural validation; returns every problem found.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut issues = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for node in &self.nodes {
            if node.id.is_empty()
                || node.id.contains(',')
                || node.id.starts_with('@')
                || node.id.starts_with('#')
            {
                issues.push(format!(
                    "node id {:?} is invalid (non-empty, no commas, no @/# prefix)",
                    node.id
                ));
            }
            if !seen.insert(node.id.clone()) {
                issues.push(format!("duplicate node id {:?}", node.id));
            }
            match node.role.as_deref() {
                None | Some("authority") | Some("leaf") => {}
                Some(other) => issues.push(format!(
                    "node {:?}: unknown role {other:?} (authority|leaf)",
                    node.id
                )),
            }
            if node.role.as_deref() == Some("authority") && node.joins_at.unwrap_or(0) > 0 {
                issues.push(format!("node {:?}: a late joiner cannot start as authority", node.id));
            }
            match node.honesty.as_str() {
                "honest" | "fail-contracts" | "drop-feedback" | "false-scorer" => {}
                "fail-every-nth" => {
                    if node.fail_period.is_none_or(|n| n < 2) {
                        issues.push(format!(
                            "node {:?}: fail-every-nth requires fail_period >= 2",
                            node.id
                        ));
                    }
                }
                other => issues.push(format!("node {:?}: unknown honesty {other:?}", node.id)),
            }
            if let Err(e) = parse_rational(&node.accept_threshold) {
                issues.push(format!("node {:?}: bad accept_threshold: {e}", node.id));
            }
            if node.capacity == 0 {
                issues.push(format!("node {:?}: capacity must be positive", node.id));
            }
        }
        let declared = |id: &str| seen.contains(id);
        for node in &self.nodes {
            if let Some(a) = &node.authority {
                if !declared(a) {
                    issues.push(format!("node {:?}: pinned authority {a:?} not declared", node.id));
                }
            }
            if let Some(v) = &node.via {
                if !declared(v) {
                    issues.push(format!("node {:?}: via {v:?} not declared", node.id));
                }
            }
        }
        let mut last_tick = 0u64;
        for (i, trade) in self.trades.iter().enumerate() {
            for party in [&trade.initiator, &trade.responder] {
                if !declared(party) {
                    issues.push(format!("trade #{i}: node {party:?} not declared"));
                }
            }
            if trade.initiator == trade.responder {
                issues.push(format!("trade #{i}: a node cannot trade with itself"));
            }
            if trade.share_size == 0 || trade.duration == 0 {
                issues.push(format!("trade #{i}: share_size and duration must be positive"));
            }
            if trade.tick < last_tick {
                issues.push(format!("trade #{i}: schedule must be sorted by tick"));
            }
            last_tick = trade.tick;
        }
        for (i, rev) in self.revocations.iter().enumerate() {
            if !declared(&rev.node) {
                issues.push(format!("revocation #{i}: node {:?} not declared", rev.node));
            }
        }
        for (i, action) in self.adversaries.iter().enumerate() {
            let refs: Vec<&String> = match action {
                AdversaryAction::Impersonate { victim, target, .. } => vec![victim, target],
                AdversaryAction::MitmTamper { a, b, .. } => vec![a, b],
                AdversaryAction::Replay { a, b, .. } => vec![a, b],
                AdversaryAction::SubstituteBinding { a, b } => vec![a, b],
                AdversaryAction::ForgeFeedback {
                    as_scorer, target, ..
                } => vec![as_scorer, target],
                AdversaryAction::FakeAuthorityNotice {
                    actor,
                    claimed_new,
                    claimed_old,
                    ..
                } => vec![actor, claimed_new, claimed_old],
                AdversaryAction::RogueRotateInit { actor, .. } => vec![actor],
            };
            for id in refs {
                if !declared(id) {
                    issues.push(format!("adversary #{i}: node {id:?} not declared"));
                }
            }
            if let AdversaryAction::ForgeFeedback { score, .. } = action {
                if *score != 1 && *score != -1 {
                    issues.push(format!("adversary #{i}: score must be +1 or -1"));
                }
            }
        }
        if self.weight_mode().is_err() {
            issues.push(format!("unknown weight_mode {:?}", self.weight_mode));
        }
        match self.factor() {
            Ok(f) => {
                if f <= Rational::from_integer(0.into()) {
                    issues.push("authority_factor must be positive".to_string());
                }
            }
            Err(e) => issues.push(format!("bad authority_factor: {e}")),
        }
        if self.link_delay == 0 {
            issues.push("link_delay must be at least 1 tick".to_string());
        }
        let initial_authorities = self
            .nodes
            .iter()
            .filter(|n| n.role.as_deref() == Some("authority"))
            .count();
        let initial_nodes = self
            .nodes
            .iter()
            .filter(|n| n.joins_at.unwrap_or(0) == 0)
            .count();
        if initial_nodes == 0 {
            issues.push("at least one initial-roster node is required".to_string());
        }
        if initial_authorities == 0 {
            let want = self.authorities.unwrap_or(1) as usize;
            if want == 0 || want > initial_nodes.max(1) {
                issues.push(format!(
                    "authorities count {want} out of range for {initial_nodes} initial nodes"
                ));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScriptError { issues })
        }
    }

    pub fn honesty_of(node: &NodeDecl) -> Honesty {
        match node.honesty.as_str() {
            "fail-contracts" => Honesty::FailContracts,
            "drop-feedback" => Honesty::DropFeedback,
            "false-scorer" => Honesty::FalseScorer,
            "fail-every-nth" => Honesty::FailEveryNth(node.fail_period.unwrap_or(u64::MAX)),
            _ => Honesty::Honest,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "two-honest"
seed = 42
until = 100
weight_mode = "unit"

[[nodes]]
id = "a1"
role = "authority"

[[nodes]]
id = "s1"
authority = "a1"

[[nodes]]
id = "s2"
authority = "a1"

[[trades]]
tick = 5
initiator = "s1"
responder = "s2"
share_size = 100
duration = 20

[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 2
"#;

    #[test]
    fn minimal_script_parses_and_validates() {
        let script = ScenarioScript::from_toml(MINIMAL).unwrap();
        script.validate().unwrap();
        assert_eq!(script.name, "two-honest");
        assert_eq!(script.nodes.len(), 3);
        assert_eq!(script.trades.len(), 1);
        assert_eq!(script.expectations.len(), 1);
        assert_eq!(script.weight_mode().unwrap(), WeightMode::Unit);
    }

    #[test]
    fn undeclared_nodes_are_reported() {
        let mut script = ScenarioScript::from_toml(MINIMAL).unwrap();
        script.trades[0].responder = "ghost".to_string();
        let err = script.validate().unwrap_err();
        assert!(err.issues.iter().any(|i| i.contains("ghost")));
    }

    #[test]
    fn self_trade_and_zero_params_are_reported() {
        let mut script = ScenarioScript::from_toml(MINIMAL).unwrap();
        script.trades[0].responder = "s1".to_string();
        script.trades[0].share_size = 0;
        let err = script.validate().unwrap_err();
        assert_eq!(err.issues.len(), 2);
    }

    #[test]
    fn reserved_prefixes_are_rejected() {
        let mut script = ScenarioScript::from_toml(MINIMAL).unwrap();
        script.nodes[1].id = "@bad".to_string();
        assert!(script.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = format!("{MINIMAL}\nbogus_field = 1\n");
        assert!(ScenarioScript::from_toml(&bad).is_err());
    }
}
