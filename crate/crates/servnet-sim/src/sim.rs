//! The deterministic discrete-event harness: builds a servnet from a
//! scenario script, schedules protocol and adversary events on a simulated
//! network, and produces a replayable event log plus reputation snapshots.
//!
//! Time is integer ticks; every link has a one-tick delay. All state is kept
//! in ordered maps and all randomness flows from seeded streams, so a given
//! (script, seed) pair produces a byte-identical log every run.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::rand_core::RngCore;
use serde_json::{json, Value};

use message_security::{PublicKeyId, SecurityCtx, SymmetricKeyId, TransactionId};
use reputation_core::{
    global_reputation, new_ledger, parse_rational, GlobalReputation, Rational, ServerId,
    WeightMode,
};
use servnet_protocol::records::{DbOp, DbRecord};
use servnet_protocol::rotation::rotate_init_payload;
use servnet_protocol::wire::Message;
use servnet_protocol::{elect_authority, AuthorityDirectory, DirectoryView, ElectionOutcome, ThresholdPolicy};

use crate::adversary::{adversary_id, link_key, AdversaryIdentity, Interposer};
use crate::db::DbServer;
use crate::log::{EventLog, Snapshot, SnapshotRow};
use crate::node::{AuthorityState, Node};
use crate::scenario::{AdversaryAction, Expectation, ScenarioScript, TradeDecl, Vulnerabilities};

/// Inactivity timeout for contract sessions, in ticks.
pub const SESSION_TIMEOUT: u64 = 40;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidScript(#[from] crate::scenario::ScriptError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Work scheduled on the event queue.
#[derive(Debug, Clone)]
pub(crate) enum WorkItem {
    Deliver {
        from: ServerId,
        to: ServerId,
        bytes: Vec<u8>,
    },
    TradeStart {
        index: usize,
    },
    RegistrationStart {
        node: ServerId,
    },
    ShareExpiry {
        owner: ServerId,
        holder: ServerId,
        txn: TransactionId,
    },
    FeedbackDeadline {
        authority: ServerId,
        txn: TransactionId,
        scorer: ServerId,
    },
    ElectionTick,
    AdversaryAt {
        index: usize,
    },
    RevokeAt {
        node: ServerId,
    },
}

/// A built simulation, ready to run.
pub struct Sim {
    pub(crate) name: String,
    pub(crate) weight_mode: WeightMode,
    pub(crate) factor: Rational,
    pub(crate) feedback_timeout: u64,
    pub(crate) link_delay: u64,
    pub(crate) penalize_cheating_giver: bool,
    pub(crate) election_period: u64,
    pub(crate) vuln: Vulnerabilities,
    pub(crate) sec: SecurityCtx,
    pub(crate) nodes: BTreeMap<ServerId, Node>,
    pub(crate) db: DbServer,
    pub(crate) queue: BTreeMap<(u64, u64), WorkItem>,
    pub(crate) queue_seq: u64,
    pub(crate) event_seq: u64,
    pub(crate) now: u64,
    pub(crate) log: EventLog,
    pub(crate) interposers: BTreeMap<(ServerId, ServerId), Interposer>,
    pub(crate) adversary: Option<AdversaryIdentity>,
    /// Public information boards: key bindings and authority-of-record, kept
    /// for the database server and as a fallback view for unregistered
    /// nodes. Authorities use their own directories.
    pub(crate) board_pk: BTreeMap<ServerId, PublicKeyId>,
    pub(crate) board_authority: BTreeMap<ServerId, ServerId>,
    pub(crate) trades: Vec<TradeDecl>,
    pub(crate) adversary_actions: Vec<AdversaryAction>,
    pub(crate) pending_revocation_after_rotation: BTreeSet<ServerId>,
    pub(crate) expectations: Vec<Expectation>,
}

/// Builds the servnet described by the script. The initial roster bypasses
/// the registration protocol; later joiners run it in full.
pub fn build_sim(script: &ScenarioScript) -> Result<Sim, SimError> {
    script.validate()?;
    let weight_mode = script.weight_mode().map_err(SimError::Invalid)?;
    let factor = script.factor().map_err(SimError::Invalid)?;

    let mut sec = SecurityCtx::new(script.seed);
    let db_id = DbServer::server_id();
    let db_keys = sec.keygen(&db_id, 0);

    let adversary = if script.adversaries.is_empty() {
        None
    } else {
        let id = adversary_id();
        let keys = sec.keygen(&id, u64::MAX);
        Some(AdversaryIdentity { id, keys })
    };

    // Key seeds follow sorted pseudonym order so they are independent of
    // declaration order.
    let mut sorted_ids: Vec<String> = script.nodes.iter().map(|n| n.id.clone()).collect();
    sorted_ids.sort();
    let key_seed_of: BTreeMap<String, u64> = sorted_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i as u64 + 1))
        .collect();

    let initial: Vec<&crate::scenario::NodeDecl> = script
        .nodes
        .iter()
        .filter(|n| n.joins_at.unwrap_or(0) == 0)
        .collect();

    // Initial authorities: pinned roles win; otherwise a seeded draw.
    let pinned: Vec<ServerId> = initial
        .iter()
        .filter(|n| n.role.as_deref() == Some("authority"))
        .map(|n| ServerId::new(n.id.as_str()))
        .collect();
    let authorities: Vec<ServerId> = if !pinned.is_empty() {
        pinned
    } else {
        let want = script.authorities.unwrap_or(1) as usize;
        let mut pool: Vec<ServerId> = initial
            .iter()
            .filter(|n| n.role.as_deref() != Some("leaf"))
            .map(|n| ServerId::new(n.id.as_str()))
            .collect();
        if pool.len() < want {
            return Err(SimError::Invalid(format!(
                "cannot draw {want} authorities from {} eligible nodes",
                pool.len()
            )));
        }
        let mut rng = sec.derived_rng("authority-draw");
        let mut drawn = Vec::new();
        for _ in 0..want {
            let idx = (rng.next_u64() % pool.len() as u64) as usize;
            drawn.push(pool.remove(idx));
        }
        drawn.sort();
        drawn
    };
    let authority_set: BTreeSet<ServerId> = authorities.iter().cloned().collect();

    // Leaf attachment: pinned or seeded draw.
    let mut attach_rng = sec.derived_rng("attach-draw");
    let mut attachment: BTreeMap<ServerId, ServerId> = BTreeMap::new();
    for decl in &initial {
        let id = ServerId::new(decl.id.as_str());
        if authority_set.contains(&id) {
            attachment.insert(id.clone(), id.clone());
            continue;
        }
        let auth = match &decl.authority {
            Some(a) => {
                let a = ServerId::new(a.as_str());
                if !authority_set.contains(&a) {
                    return Err(SimError::Invalid(format!(
                        "node {:?} pins authority {:?} which is not an initial authority",
                        decl.id, a
                    )));
                }
                a
            }
            None => {
                let idx = (attach_rng.next_u64() % authorities.len() as u64) as usize;
                authorities[idx].clone()
            }
        };
        attachment.insert(id, auth);
    }

    // Key material and node shells.
    let mut nodes = BTreeMap::new();
    let mut board_pk = BTreeMap::new();
    let mut board_authority = BTreeMap::new();
    for decl in &script.nodes {
        let id = ServerId::new(decl.id.as_str());
        let keys = sec.keygen(&id, key_seed_of[&decl.id]);
        board_pk.insert(id.clone(), keys.public);
        let threshold = parse_rational(&decl.accept_threshold).map_err(SimError::Invalid)?;
        let is_initial = decl.joins_at.unwrap_or(0) == 0;
        let node = Node {
            id: id.clone(),
            keys,
            honesty: ScenarioScript::honesty_of(decl),
            policy: ThresholdPolicy {
                threshold,
                newcomer_grace: decl.newcomer_grace,
                capacity: decl.capacity,
            },
            registered: is_initial,
            my_authority: if is_initial {
                attachment.get(&id).cloned()
            } else {
                None
            },
            authority: None,
            initiator_sessions: Vec::new(),
            responder_sessions: Vec::new(),
            seen_contract_nonces: BTreeMap::new(),
            bound: BTreeMap::new(),
            feedback_sent: BTreeSet::new(),
            held_shares: Vec::new(),
            expiry_count: 0,
            pending_counter: BTreeMap::new(),
            reg_nonce: None,
            reg_via: decl.via.as_deref().map(ServerId::new),
            db_public_key: db_keys.public,
        };
        nodes.insert(id, node);
    }

    // Initial directory shared by every authority.
    let mut initial_dir = AuthorityDirectory::new();
    for decl in &initial {
        let id = ServerId::new(decl.id.as_str());
        initial_dir.insert(id.clone(), attachment[&id].clone(), board_pk[&id]);
        board_authority.insert(id.clone(), attachment[&id].clone());
    }

    // Database: one subtree key per authority, records for the roster.
    let mut db = DbServer {
        id: db_id.clone(),
        keys: db_keys,
        records: BTreeMap::new(),
        subtree_keys: BTreeMap::new(),
        revoked_keys: BTreeSet::new(),
        pending_rotations: BTreeMap::new(),
    };
    for auth in &authorities {
        let key = sec.mint_symmetric_key(&[db_id.clone(), auth.clone()]);
        db.subtree_keys.insert(auth.clone(), key);
    }
    for decl in &initial {
        let id = ServerId::new(decl.id.as_str());
        db.records.insert(
            id.clone(),
            DbRecord {
                node: id.clone(),
                ledger: new_ledger(id.clone()),
                authority: attachment[&id].clone(),
            },
        );
    }

    // Authority state: directory copy plus zeroed subtree ledgers.
    for auth in &authorities {
        let mut ledgers = BTreeMap::new();
        for (node, a) in &attachment {
            if a == auth {
                ledgers.insert(node.clone(), new_ledger(node.clone()));
            }
        }
        let state = AuthorityState {
            directory: initial_dir.clone(),
            ledgers,
            subtree_key: Some(db.subtree_keys[auth]),
            ..Default::default()
        };
        nodes.get_mut(auth).expect("authority declared").authority = Some(state);
    }

    let mut sim = Sim {
        name: script.name.clone(),
        weight_mode,
        factor,
        feedback_timeout: script.feedback_timeout,
        link_delay: script.link_delay,
        penalize_cheating_giver: script.penalize_cheating_giver,
        election_period: script.election_period,
        vuln: script.vulnerabilities,
        sec,
        nodes,
        db,
        queue: BTreeMap::new(),
        queue_seq: 0,
        event_seq: 0,
        now: 0,
        log: EventLog::new(),
        interposers: BTreeMap::new(),
        adversary,
        board_pk,
        board_authority,
        trades: script.trades.clone(),
        adversary_actions: Vec::new(),
        pending_revocation_after_rotation: BTreeSet::new(),
        expectations: script.expectations.clone(),
    };

    sim.emit(
        &db_id,
        "setup-complete",
        json!({
            "authorities": authorities.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
            "nodes": initial.len(),
            "weight_mode": script.weight_mode,
        }),
    );

    // Schedule the script.
    for (index, trade) in script.trades.clone().iter().enumerate() {
        sim.schedule(trade.tick, WorkItem::TradeStart { index });
    }
    for decl in &script.nodes {
        if let Some(t) = decl.joins_at {
            if t > 0 {
                sim.schedule(
                    t,
                    WorkItem::RegistrationStart {
                        node: ServerId::new(decl.id.as_str()),
                    },
                );
            }
        }
    }
    for rev in &script.revocations {
        sim.schedule(
            rev.tick,
            WorkItem::RevokeAt {
                node: ServerId::new(rev.node.as_str()),
            },
        );
    }
    if script.election_period > 0 {
        sim.schedule(script.election_period, WorkItem::ElectionTick);
    }
    for action in script.adversaries.clone() {
        sim.inject_adversary(action)?;
    }

    Ok(sim)
}

impl Sim {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expectations(&self) -> &[Expectation] {
        &self.expectations
    }

    pub(crate) fn emit(&mut self, actor: &ServerId, kind: &str, payload: Value) {
        let seq = self.event_seq;
        self.event_seq += 1;
        self.log.push(self.now, seq, actor, kind, payload);
    }

    pub(crate) fn schedule(&mut self, tick: u64, item: WorkItem) {
        let seq = self.queue_seq;
        self.queue_seq += 1;
        self.queue.insert((tick.max(self.now), seq), item);
    }

    /// Schedules a (re-)registration attempt for a declared node, e.g. a
    /// revoked pseudonym coming back. Brand-new ledger either way.
    pub fn schedule_registration(&mut self, node: &ServerId, at_tick: u64) {
        self.schedule(
            at_tick,
            WorkItem::RegistrationStart { node: node.clone() },
        );
    }

    /// Queues an adversary action: arms the relevant link interposer and
    /// schedules its trigger.
    pub fn inject_adversary(&mut self, action: AdversaryAction) -> Result<(), SimError> {
        if self.adversary.is_none() {
            let id = adversary_id();
            let keys = self.sec.keygen(&id, u64::MAX);
            self.adversary = Some(AdversaryIdentity { id, keys });
        }
        let index = self.adversary_actions.len();
        match &action {
            AdversaryAction::Impersonate {
                victim,
                target,
                at_tick,
                share_size,
                duration,
            } => {
                let victim = ServerId::new(victim.as_str());
                let target = ServerId::new(target.as_str());
                let victim_key = self
                    .nodes
                    .get(&victim)
                    .ok_or_else(|| SimError::Invalid(format!("unknown victim {victim}")))?
                    .keys
                    .private;
                let key = link_key(&victim, &target);
                self.interposers.entry(key).or_default().impersonation =
                    Some(crate::adversary::ImpersonationState {
                        victim,
                        target,
                        params: servnet_protocol::TradeParams {
                            share_size: *share_size,
                            duration: *duration,
                        },
                        victim_key,
                        injected_propose: None,
                        responded: false,
                    });
                self.schedule(*at_tick, WorkItem::AdversaryAt { index });
            }
            AdversaryAction::MitmTamper {
                a,
                b,
                from_tick,
                field,
                value,
            } => {
                let key = link_key(&ServerId::new(a.as_str()), &ServerId::new(b.as_str()));
                self.interposers.entry(key).or_default().tamper =
                    Some(crate::adversary::TamperState {
                        from_tick: *from_tick,
                        field: *field,
                        value: *value,
                        done: false,
                    });
            }
            AdversaryAction::Replay {
                a,
                b,
                capture,
                occurrence,
                replay_at,
            } => {
                let from = ServerId::new(a.as_str());
                let to = ServerId::new(b.as_str());
                let key = link_key(&from, &to);
                self.interposers
                    .entry(key)
                    .or_default()
                    .captures
                    .push(crate::adversary::CaptureState {
                        from,
                        to,
                        tag: capture.clone(),
                        occurrence: *occurrence,
                        seen: 0,
                        bytes: None,
                    });
                self.schedule(*replay_at, WorkItem::AdversaryAt { index });
            }
            AdversaryAction::SubstituteBinding { a, b } => {
                let from = ServerId::new(a.as_str());
                let to = ServerId::new(b.as_str());
                let key = link_key(&from, &to);
                self.interposers.entry(key).or_default().substitute =
                    Some(crate::adversary::SubstituteState {
                        from,
                        to,
                        captured: None,
                        done: false,
                    });
            }
            AdversaryAction::ForgeFeedback {
                as_scorer,
                target,
                at_tick,
                ..
            } => {
                let a = ServerId::new(as_scorer.as_str());
                let b = ServerId::new(target.as_str());
                let key = link_key(&a, &b);
                self.interposers.entry(key).or_default().observe =
                    Some(crate::adversary::ObserveState::default());
                self.schedule(*at_tick, WorkItem::AdversaryAt { index });
            }
            AdversaryAction::FakeAuthorityNotice { at_tick, .. } => {
                self.schedule(*at_tick, WorkItem::AdversaryAt { index });
            }
            AdversaryAction::RogueRotateInit { at_tick, .. } => {
                self.schedule(*at_tick, WorkItem::AdversaryAt { index });
            }
        }
        self.adversary_actions.push(action);
        Ok(())
    }

    /// Processes all scheduled work through tick `until` (inclusive).
    /// Protocol aborts are events, never errors.
    pub fn run(&mut self, until: u64) -> &EventLog {
        loop {
            let next = self.queue.keys().next().copied();
            match next {
                Some((tick, seq)) if tick <= until => {
                    while self.now < tick {
                        self.now += 1;
                        self.sweep_session_timeouts();
                    }
                    let item = self.queue.remove(&(tick, seq)).expect("peeked key");
                    self.handle(item);
                }
                _ => break,
            }
        }
        while self.now < until {
            self.now += 1;
            self.sweep_session_timeouts();
        }
        &self.log
    }

    fn handle(&mut self, item: WorkItem) {
        match item {
            WorkItem::Deliver { from, to, bytes } => self.handle_deliver(from, to, bytes),
            WorkItem::TradeStart { index } => self.handle_trade_start(index),
            WorkItem::RegistrationStart { node } => self.handle_registration_start(node),
            WorkItem::ShareExpiry { owner, holder, txn } => {
                self.handle_share_expiry(owner, holder, txn)
            }
            WorkItem::FeedbackDeadline {
                authority,
                txn,
                scorer,
            } => self.handle_feedback_deadline(authority, txn, scorer),
            WorkItem::ElectionTick => self.handle_election_tick(),
            WorkItem::AdversaryAt { index } => self.handle_adversary_trigger(index),
            WorkItem::RevokeAt { node } => self.revoke_server(node),
        }
    }

    /// Sends a message from a node, passing through any link interposer.
    pub(crate) fn send(&mut self, from: &ServerId, to: &ServerId, message: &Message) {
        let bytes = message.encode();
        self.emit(
            from,
            "message-sent",
            json!({
                "to": to.as_str(),
                "tag": message.tag_name(),
                "digest": message_security::digest(&bytes).short_hex(),
            }),
        );
        self.transmit(from.clone(), to.clone(), bytes);
    }

    /// Puts raw bytes on the wire (interposer-aware).
    pub(crate) fn transmit(&mut self, from: ServerId, to: ServerId, bytes: Vec<u8>) {
        let key = link_key(&from, &to);
        if self.interposers.contains_key(&key) {
            let adversary = self
                .adversary
                .as_ref()
                .expect("interposers exist only with an adversary");
            // Temporarily detach the interposer to satisfy the borrow
            // checker while it may use the security context.
            let mut interposer = self.interposers.remove(&key).expect("checked above");
            let outcome = interposer.filter(&from, &to, bytes, self.now, &mut self.sec, adversary);
            self.interposers.insert(key, interposer);
            for (actor, kind, payload) in outcome.events {
                self.emit(&actor, &kind, payload);
            }
            for (f, t, b) in outcome.deliver {
                let tick = self.now + self.link_delay;
                self.schedule(tick, WorkItem::Deliver { from: f, to: t, bytes: b });
            }
        } else {
            let tick = self.now + self.link_delay;
            self.schedule(tick, WorkItem::Deliver { from, to, bytes });
        }
    }

    /// Injected adversary traffic: bypasses interposers (the adversary is
    /// the interposer) but is still delivered with link delay.
    pub(crate) fn inject_raw(&mut self, from: ServerId, to: ServerId, bytes: Vec<u8>) {
        let tick = self.now + self.link_delay;
        self.schedule(tick, WorkItem::Deliver { from, to, bytes });
    }

    /// A node's lookup view: its own directory if it is an authority, else
    /// its authority's, else the public board.
    pub(crate) fn directory_view_for(&self, node_id: &ServerId) -> AuthorityDirectory {
        if let Some(node) = self.nodes.get(node_id) {
            if let Some(state) = &node.authority {
                return state.directory.clone();
            }
            if let Some(auth) = &node.my_authority {
                if let Some(state) = self.nodes.get(auth).and_then(|n| n.authority.as_ref()) {
                    return state.directory.clone();
                }
            }
        }
        self.board_directory()
    }

    pub(crate) fn board_directory(&self) -> AuthorityDirectory {
        let mut dir = AuthorityDirectory::new();
        for (node, auth) in &self.board_authority {
            if let Some(pk) = self.board_pk.get(node) {
                dir.insert(node.clone(), auth.clone(), *pk);
            }
        }
        dir
    }

    fn sweep_session_timeouts(&mut self) {
        let ids: Vec<ServerId> = self.nodes.keys().cloned().collect();
        let now = self.now;
        for id in ids {
            let mut fired: Vec<(ServerId, servnet_protocol::Role)> = Vec::new();
            {
                let node = self.nodes.get_mut(&id).expect("node exists");
                for session in node
                    .initiator_sessions
                    .iter_mut()
                    .chain(node.responder_sessions.iter_mut())
                {
                    if session.on_timeout_check(now, SESSION_TIMEOUT).is_some() {
                        fired.push((session.peer.clone(), session.role));
                    }
                }
            }
            for (peer, role) in fired {
                self.emit(
                    &id,
                    "session-aborted",
                    json!({
                        "peer": peer.as_str(),
                        "role": role_str(role),
                        "reason": "timeout",
                    }),
                );
            }
        }
    }

    fn handle_trade_start(&mut self, index: usize) {
        let decl = self.trades[index].clone();
        let initiator = ServerId::new(decl.initiator.as_str());
        let responder = ServerId::new(decl.responder.as_str());
        let ready = |sim: &Sim, id: &ServerId| {
            sim.nodes
                .get(id)
                .map(|n| n.registered)
                .unwrap_or(false)
        };
        if !ready(self, &initiator) || !ready(self, &responder) {
            self.emit(
                &initiator,
                "trade-skipped",
                json!({ "responder": responder.as_str(), "reason": "party-not-registered" }),
            );
            return;
        }
        let params = servnet_protocol::TradeParams {
            share_size: decl.share_size,
            duration: decl.duration,
        };
        let counter = servnet_protocol::TradeParams {
            share_size: decl.responder_share_size.unwrap_or(decl.share_size),
            duration: decl.responder_duration.unwrap_or(decl.duration),
        };
        self.nodes
            .get_mut(&responder)
            .expect("checked above")
            .pending_counter
            .entry(initiator.clone())
            .or_default()
            .push(counter);
        self.emit(
            &initiator,
            "trade-started",
            json!({
                "responder": responder.as_str(),
                "share_size": decl.share_size,
                "duration": decl.duration,
            }),
        );
        self.start_initiator_session(&initiator, &responder, params);
    }

    fn handle_election_tick(&mut self) {
        let authorities: Vec<ServerId> = self.db.subtree_keys.keys().cloned().collect();
        for auth in authorities {
            self.run_election_for(&auth);
        }
        if self.election_period > 0 {
            let next = self.now + self.election_period;
            self.schedule(next, WorkItem::ElectionTick);
        }
    }

    fn run_election_for(&mut self, auth: &ServerId) {
        let Some(node) = self.nodes.get(auth) else {
            return;
        };
        let Some(state) = &node.authority else {
            return;
        };
        if state.rotation_pending {
            self.emit(auth, "election-deferred", json!({ "reason": "rotation-pending" }));
            return;
        }
        let Some(my_ledger) = state.ledgers.get(auth) else {
            self.emit(auth, "election-deferred", json!({ "reason": "ledgers-not-loaded" }));
            return;
        };
        let current_gr = global_reputation(my_ledger);
        // Contenders must still be subtree members of record: a ledger can
        // outlive a revoked node briefly, a directory entry cannot.
        let leaves: Vec<(ServerId, GlobalReputation)> = state
            .ledgers
            .iter()
            .filter(|(id, _)| {
                *id != auth && state.directory.authority_of(id) == Some(auth.clone())
            })
            .map(|(id, ledger)| (id.clone(), global_reputation(ledger)))
            .collect();
        let outcome = elect_authority(&leaves, &current_gr, &self.factor);
        let contender = leaves
            .iter()
            .max_by(|(a_id, a_gr), (b_id, b_gr)| a_gr.cmp(b_gr).then_with(|| b_id.cmp(a_id)))
            .map(|(id, gr)| (id.clone(), gr.clone()));
        self.emit(
            auth,
            "election-held",
            json!({
                "current_gr": reputation_core::to_ratio_string(current_gr.as_rational()),
                "contender": contender.as_ref().map(|(id, _)| id.as_str().to_string()),
                "contender_gr": contender
                    .as_ref()
                    .map(|(_, gr)| reputation_core::to_ratio_string(gr.as_rational())),
                "factor": reputation_core::to_ratio_string(&self.factor),
                "decision": match &outcome {
                    ElectionOutcome::Keep => "keep".to_string(),
                    ElectionOutcome::Change { to } => format!("change:{to}"),
                },
            }),
        );
        if let ElectionOutcome::Change { to } = outcome {
            self.initiate_rotation(auth.clone(), to);
        }
    }

    /// The sitting authority opens the rotation handshake with the DB.
    pub(crate) fn initiate_rotation(&mut self, old: ServerId, new: ServerId) {
        let Some(key) = self
            .nodes
            .get(&old)
            .and_then(|n| n.authority.as_ref())
            .and_then(|s| s.subtree_key)
        else {
            return;
        };
        if let Some(state) = self.nodes.get_mut(&old).and_then(|n| n.authority.as_mut()) {
            state.rotation_pending = true;
        }
        let nonce = self.sec.fresh_nonce(&old);
        let payload = rotate_init_payload(&new, &old, nonce);
        let boxed = self
            .sec
            .seal(&old, &key, &payload)
            .expect("the sitting authority holds its subtree key");
        let msg = Message::RotateInit {
            from: old.clone(),
            boxed,
        };
        let db_id = self.db.id.clone();
        self.send(&old, &db_id, &msg);
    }

    /// Role swap once the DB commits a rotation: the new authority inherits
    /// the directory, loads its ledgers over the sealed channel, and the
    /// deposed authority's next access is refused.
    pub(crate) fn commit_rotation_roles(&mut self, old: &ServerId, new: &ServerId, new_key: SymmetricKeyId) {
        let old_state = self
            .nodes
            .get_mut(old)
            .and_then(|n| n.authority.take());
        let Some(old_state) = old_state else {
            return;
        };
        let old_key = old_state.subtree_key;
        // Abandon undecided feedback trackers; there is no handover protocol
        // for them.
        for ((txn, scorer), tracker) in &old_state.trackers {
            if !tracker.decided {
                self.emit(
                    old,
                    "feedback-abandoned-at-rotation",
                    json!({ "txn": txn.to_string(), "scorer": scorer.as_str() }),
                );
            }
        }
        let mut directory = old_state.directory;
        for (node, auth) in self.board_authority.clone() {
            if &auth == old {
                directory.set_authority(&node, new.clone());
            }
        }
        self.emit(
            new,
            "directory-handover",
            json!({ "from": old.as_str(), "entries": directory.len() }),
        );
        {
            let node = self.nodes.get_mut(new).expect("new authority exists");
            node.authority = Some(AuthorityState {
                directory,
                ledgers: BTreeMap::new(),
                subtree_key: Some(new_key),
                ..Default::default()
            });
            node.my_authority = Some(new.clone());
        }
        if let Some(node) = self.nodes.get_mut(old) {
            node.my_authority = Some(new.clone());
        }
        for (node, auth) in self.board_authority.clone() {
            if &auth == old {
                self.board_authority.insert(node, new.clone());
            }
        }
        // The new authority's first accesses: prove possession is already
        // done (message 3); now load the subtree records.
        let read = DbOp::ReadSubtree.encode();
        let boxed = self
            .sec
            .seal(new, &new_key, &read)
            .expect("granted key is held");
        let msg = Message::DbRead {
            from: new.clone(),
            boxed,
        };
        let db_id = self.db.id.clone();
        self.send(new, &db_id, &msg);
        // The deposed authority probes the DB with its stale key; the
        // refusal demonstrates the lockout.
        if let Some(stale) = old_key {
            let probe = self
                .sec
                .seal(old, &stale, &DbOp::ReadSubtree.encode())
                .expect("old key is still held, just revoked at the DB");
            let msg = Message::DbRead {
                from: old.clone(),
                boxed: probe,
            };
            self.send(old, &db_id, &msg);
        }
        if self.pending_revocation_after_rotation.remove(old) {
            self.revoke_leaf(old.clone());
        }
    }

    /// Revocation entry point: an authority first hands its role over.
    pub(crate) fn revoke_server(&mut self, node_id: ServerId) {
        let (registered, successor, is_authority) = {
            let Some(node) = self.nodes.get(&node_id) else {
                self.emit(&node_id, "revocation-unknown", json!({}));
                return;
            };
            let successor = node.authority.as_ref().and_then(|state| {
                state
                    .ledgers
                    .iter()
                    .filter(|(id, _)| {
                        **id != node_id
                            && state.directory.authority_of(id) == Some(node_id.clone())
                    })
                    .map(|(id, ledger)| (id.clone(), global_reputation(ledger)))
                    .max_by(|(a_id, a_gr), (b_id, b_gr)| {
                        a_gr.cmp(b_gr).then_with(|| b_id.cmp(a_id))
                    })
                    .map(|(id, _)| id)
            });
            (node.registered, successor, node.is_authority())
        };
        if !registered {
            self.emit(&node_id, "revocation-unknown", json!({}));
            return;
        }
        self.emit(&node_id, "revocation-started", json!({}));
        if is_authority {
            match successor {
                Some(successor) => {
                    // Forced handover: the departing authority rotates first
                    // regardless of the election factor.
                    self.emit(
                        &node_id,
                        "election-held",
                        json!({
                            "decision": format!("change:{successor}"),
                            "forced": true,
                        }),
                    );
                    self.pending_revocation_after_rotation.insert(node_id.clone());
                    self.initiate_rotation(node_id, successor);
                }
                None => {
                    self.emit(&node_id, "subtree-dissolved", json!({}));
                    self.revoke_leaf(node_id);
                }
            }
            return;
        }
        self.revoke_leaf(node_id);
    }

    /// Leaf revocation: shares go back, the ledger zeroes, every authority
    /// drops the entry.
    pub(crate) fn revoke_leaf(&mut self, node_id: ServerId) {
        let authority = self
            .nodes
            .get(&node_id)
            .and_then(|n| n.authority_of_record());
        // Return every share held under a live contract to its owner.
        let held: Vec<crate::node::HeldShare> = self
            .nodes
            .get_mut(&node_id)
            .map(|n| std::mem::take(&mut n.held_shares))
            .unwrap_or_default();
        for share in held {
            self.emit(
                &node_id,
                "share-returned",
                json!({
                    "to": share.owner.as_str(),
                    "size": share.size,
                    "txn": share.txn.to_string(),
                }),
            );
        }
        if let Some(auth) = &authority {
            self.emit(
                &node_id,
                "share-residual-transferred",
                json!({ "to": auth.as_str() }),
            );
        }
        // Shares this node owns at other holders die with it.
        let ids: Vec<ServerId> = self.nodes.keys().cloned().collect();
        for id in ids {
            if let Some(n) = self.nodes.get_mut(&id) {
                n.held_shares.retain(|s| s.owner != node_id);
            }
        }
        // Zero the ledger at its authority, write through, then remove.
        if let Some(auth) = authority.clone() {
            let zeroed = new_ledger(node_id.clone());
            let mut write = None;
            if let Some(state) = self.nodes.get_mut(&auth).and_then(|n| n.authority.as_mut()) {
                state.ledgers.insert(node_id.clone(), zeroed.clone());
                state.directory.remove(&node_id);
                write = state.subtree_key;
                state.ledgers.remove(&node_id);
            }
            self.emit(&auth, "reputation-zeroed", json!({ "node": node_id.as_str() }));
            if let Some(key) = write {
                let record = DbRecord {
                    node: node_id.clone(),
                    ledger: zeroed,
                    authority: auth.clone(),
                };
                for op in [DbOp::WriteRecord(record), DbOp::Remove(node_id.clone())] {
                    if let Ok(boxed) = self.sec.seal(&auth, &key, &op.encode()) {
                        let msg = Message::DbWrite {
                            from: auth.clone(),
                            boxed,
                        };
                        let db_id = self.db.id.clone();
                        self.send(&auth, &db_id, &msg);
                    }
                }
            }
            // Notify every other authority.
            let nonce = self.sec.fresh_nonce(&auth);
            let payload =
                servnet_protocol::rotation::revoke_notice_sign_payload(&auth, &node_id, nonce);
            let auth_key = self.nodes.get(&auth).expect("authority exists").keys.private;
            if let Ok(sig) = self.sec.sign(&auth, &auth_key, &payload) {
                let notice = Message::RevokeNotice {
                    authority: auth.clone(),
                    leaving: node_id.clone(),
                    nonce,
                    sig,
                };
                let others: Vec<ServerId> = self
                    .db
                    .subtree_keys
                    .keys()
                    .filter(|a| **a != auth)
                    .cloned()
                    .collect();
                for other in others {
                    self.send(&auth, &other, &notice);
                }
            }
        }
        self.board_authority.remove(&node_id);
        if let Some(node) = self.nodes.get_mut(&node_id) {
            node.registered = false;
            node.my_authority = None;
            node.bound.clear();
            node.initiator_sessions.clear();
            node.responder_sessions.clear();
        }
        self.emit(&node_id, "revocation-complete", json!({}));
    }

    /// Consistent reputation view at the current tick, read through the
    /// database server.
    pub fn snapshot_reputations(&self) -> Snapshot {
        let rows = self
            .db
            .records
            .values()
            .map(|record| SnapshotRow {
                server: record.node.clone(),
                transactions: record.ledger.transactions(),
                pos: record.ledger.pos_accum().clone(),
                neg: record.ledger.neg_accum().clone(),
                gr: record.reputation().into_rational(),
                authority: record.authority.clone(),
            })
            .collect();
        Snapshot { rows }
    }

    /// True iff all authorities hold identical node-authority tables; the
    /// diff lists disagreements as human-readable strings.
    pub fn check_directory_convergence(&self) -> (bool, Vec<String>) {
        let authorities: Vec<&Node> = self
            .nodes
            .values()
            .filter(|n| n.is_authority())
            .collect();
        let mut diffs = Vec::new();
        if let Some((first, rest)) = authorities.split_first() {
            let reference = &first.authority.as_ref().expect("is_authority").directory;
            for other in rest {
                let theirs = &other.authority.as_ref().expect("is_authority").directory;
                for (node, left, right) in reference.diff(theirs) {
                    diffs.push(format!(
                        "{}: {} maps to {:?}, {} maps to {:?}",
                        node,
                        first.id,
                        left.map(|a| a.to_string()),
                        other.id,
                        right.map(|a| a.to_string()),
                    ));
                }
            }
        }
        (diffs.is_empty(), diffs)
    }
}

pub(crate) fn role_str(role: servnet_protocol::Role) -> &'static str {
    match role {
        servnet_protocol::Role::Initiator => "initiator",
        servnet_protocol::Role::Responder => "responder",
    }
}
