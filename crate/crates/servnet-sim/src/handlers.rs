//! Message routing and per-node protocol handlers: delivery dispatch,
//! contract session routing, registration, feedback collection and
//! weighting, rotation participation, and the database server's side of the
//! sealed channel.

use serde_json::json;

use message_security::TransactionId;
use reputation_core::{
    apply_feedback, global_reputation, new_ledger, record_unscored_transaction, to_ratio_string,
    GlobalReputation, LocalScore, Rational, ServerId, WeightMode,
};
use servnet_protocol::contract::{rep_attest_sign_payload, rep_relay_sign_payload};
use servnet_protocol::feedback::{
    make_feedback, verify_feedback, weight_attest_sign_payload, weight_query_sign_payload,
    CopyOutcome, FeedbackDecision, FeedbackOutcomeKind, FeedbackPath, FeedbackTracker,
};
use servnet_protocol::records::{DbOp, DbRecord, DbReply};
use servnet_protocol::registration::{
    make_reg_ack, make_reg_flood, make_reg_intro, open_reg_ack, verify_reg_flood,
    verify_reg_intro,
};
use servnet_protocol::rotation::{
    change_notice_sign_payload, key_grant_payload, key_grant_sign_payload, parse_key_grant,
    parse_rotate_confirm, parse_rotate_init, revoke_notice_sign_payload, rotate_confirm_payload,
    rotate_init_payload, verify_change_notice,
};
use servnet_protocol::wire::Message;
use servnet_protocol::{
    ContractSession, DirectoryView, Role, SessionCtx, SessionEffect, SessionState, TradeParams,
};

use crate::db::PendingRotation;
use crate::node::{BoundContract, HeldShare, PendingApply};
use crate::scenario::{AdversaryAction, Honesty};
use crate::sim::{role_str, Sim, WorkItem};

/// Snapshot of session fields needed after a transition.
struct SessionInfo {
    peer: ServerId,
    role: Role,
    my_params: Option<TradeParams>,
    peer_params: Option<TradeParams>,
}

impl Sim {
    pub(crate) fn handle_deliver(&mut self, from: ServerId, to: ServerId, bytes: Vec<u8>) {
        let message = match Message::decode(&bytes) {
            Ok(m) => m,
            Err(err) => {
                self.emit(
                    &to,
                    "malformed-message",
                    json!({ "from": from.as_str(), "error": err.to_string() }),
                );
                return;
            }
        };
        self.emit(
            &to,
            "message-delivered",
            json!({
                "from": from.as_str(),
                "tag": message.tag_name(),
                "digest": message_security::digest(&bytes).short_hex(),
            }),
        );
        if to == self.db.id {
            self.handle_db_message(from, message);
        } else if self.nodes.contains_key(&to) {
            self.node_on_message(to, from, message, bytes);
        } else {
            self.emit(
                &to,
                "delivered-to-unknown",
                json!({ "tag": message.tag_name() }),
            );
        }
    }

    fn node_on_message(&mut self, me: ServerId, from: ServerId, message: Message, raw: Vec<u8>) {
        match &message {
            Message::ContractPropose { .. } => self.node_contract_propose(me, message, raw),
            Message::ContractReject { .. }
            | Message::ContractCounter { .. }
            | Message::ContractAck { .. }
            | Message::BindingHash { .. }
            | Message::BindingHashAck { .. }
            | Message::RepAttest { .. } => self.node_session_message(me, from, message, raw),
            Message::RepQuery { .. } => self.authority_rep_query(me, message),
            Message::RepRelay { .. } => self.authority_rep_relay(me, message),
            Message::RegIntro { .. } => self.authority_reg_intro(me, message),
            Message::RegAck { .. } => self.node_reg_ack(me, message),
            Message::RegFlood { .. } => self.authority_reg_flood(me, message),
            Message::Feedback { .. } => self.node_feedback(me, from, message, raw),
            Message::WeightQuery { .. } => self.authority_weight_query(me, message),
            Message::CheatingReport { .. } => self.authority_cheating_report(me, message),
            Message::WeightAttest { .. } => self.authority_weight_attest(me, message),
            Message::RotateGrant { .. } => self.node_rotate_grant(me, message),
            Message::ChangeNotice { .. } => self.node_change_notice(me, message),
            Message::RevokeNotice { .. } => self.authority_revoke_notice(me, message),
            Message::DbReadResult { .. } => self.authority_db_read_result(me, message),
            _ => {
                self.emit(
                    &me,
                    "unmatched-message",
                    json!({ "tag": message.tag_name() }),
                );
            }
        }
    }

    // ---- contract sessions ------------------------------------------------

    fn node_contract_propose(&mut self, me: ServerId, message: Message, raw: Vec<u8>) {
        let Message::ContractPropose {
            from: claimed,
            to,
            nonce,
            share_size,
            duration,
        } = &message
        else {
            return;
        };
        if *to != me || *claimed == me {
            self.emit(&me, "unmatched-message", json!({ "tag": "contract-propose" }));
            return;
        }
        if !self.nodes.get(&me).map(|n| n.registered).unwrap_or(false) {
            return;
        }
        if !self.vuln.disable_nonce_cache {
            let node = self.nodes.get_mut(&me).expect("checked above");
            let seen = node.seen_contract_nonces.entry(claimed.clone()).or_default();
            if !seen.insert(nonce.0) {
                self.emit(
                    &me,
                    "replay-rejected",
                    json!({ "peer": claimed.as_str(), "tag": "contract-propose" }),
                );
                return;
            }
        }
        let dir = self.directory_view_for(&me);
        let check = !self.vuln.disable_transcript_check;
        let now = self.now;
        let result = {
            let node = self.nodes.get_mut(&me).expect("checked above");
            let policy = node.policy.clone();
            let my_key = node.keys.private;
            let my_authority = node.authority_of_record().unwrap_or_else(|| me.clone());
            let counter = node
                .pending_counter
                .get(claimed)
                .and_then(|v| v.first())
                .copied()
                .unwrap_or(TradeParams {
                    share_size: *share_size,
                    duration: *duration,
                });
            let mut ctx = SessionCtx {
                tick: now,
                sec: &mut self.sec,
                directory: &dir,
                policy: &policy,
                my_key,
                my_authority,
                counter_params: counter,
                check_transcript: check,
            };
            ContractSession::respond(me.clone(), &message, &raw, &mut ctx)
        };
        let Some((session, effects)) = result else {
            self.emit(&me, "unmatched-message", json!({ "tag": "contract-propose" }));
            return;
        };
        let info = session_info(&session);
        self.nodes
            .get_mut(&me)
            .expect("checked above")
            .responder_sessions
            .push(session);
        self.apply_session_effects(&me, info, effects);
    }

    pub(crate) fn start_initiator_session(
        &mut self,
        initiator: &ServerId,
        responder: &ServerId,
        params: TradeParams,
    ) {
        let dir = self.directory_view_for(initiator);
        let check = !self.vuln.disable_transcript_check;
        let now = self.now;
        let (session, effects) = {
            let node = self.nodes.get_mut(initiator).expect("validated");
            let policy = node.policy.clone();
            let my_key = node.keys.private;
            let my_authority = node
                .authority_of_record()
                .unwrap_or_else(|| initiator.clone());
            let mut ctx = SessionCtx {
                tick: now,
                sec: &mut self.sec,
                directory: &dir,
                policy: &policy,
                my_key,
                my_authority,
                counter_params: params,
                check_transcript: check,
            };
            ContractSession::initiate(initiator.clone(), responder.clone(), params, &mut ctx)
        };
        let info = session_info(&session);
        self.nodes
            .get_mut(initiator)
            .expect("validated")
            .initiator_sessions
            .push(session);
        self.apply_session_effects(initiator, info, effects);
    }

    fn node_session_message(&mut self, me: ServerId, _from: ServerId, message: Message, raw: Vec<u8>) {
        let dir = self.directory_view_for(&me);
        let check = !self.vuln.disable_transcript_check;
        let now = self.now;
        let outcome = {
            let Some(node) = self.nodes.get_mut(&me) else {
                return;
            };
            let policy = node.policy.clone();
            let my_key = node.keys.private;
            let my_authority = node.authority_of_record().unwrap_or_else(|| me.clone());
            // Counter params are consumed if this transition accepts as
            // responder; peek before borrowing the session.
            let counter_peek: Option<TradeParams> = match &message {
                Message::RepAttest { subject, .. } => node
                    .pending_counter
                    .get(subject)
                    .and_then(|v| v.first())
                    .copied(),
                _ => None,
            };
            let session = find_session(node, &message);
            let Some(session) = session else {
                self.emit(
                    &me,
                    "unmatched-message",
                    json!({ "tag": message.tag_name() }),
                );
                return;
            };
            let counter = counter_peek
                .or(session.peer_params)
                .unwrap_or(TradeParams {
                    share_size: 1,
                    duration: 1,
                });
            let mut ctx = SessionCtx {
                tick: now,
                sec: &mut self.sec,
                directory: &dir,
                policy: &policy,
                my_key,
                my_authority,
                counter_params: counter,
                check_transcript: check,
            };
            let effects = session.on_message(&message, &raw, &mut ctx);
            Some((session_info(session), effects))
        };
        let Some((info, effects)) = outcome else {
            return;
        };
        // Pop the queued counter-offer once it has been put on the table.
        if effects.iter().any(
            |e| matches!(e, SessionEffect::Send { message, .. } if matches!(message, Message::ContractCounter { .. })),
        ) {
            if let Some(node) = self.nodes.get_mut(&me) {
                if let Some(queue) = node.pending_counter.get_mut(&info.peer) {
                    if !queue.is_empty() {
                        queue.remove(0);
                    }
                }
            }
        }
        self.apply_session_effects(&me, info, effects);
    }

    fn apply_session_effects(&mut self, me: &ServerId, info: SessionInfo, effects: Vec<SessionEffect>) {
        for effect in effects {
            match effect {
                SessionEffect::Send { to, message } => self.send(me, &to, &message),
                SessionEffect::Bound { txn } => {
                    let now = self.now;
                    let my_params = info.my_params.expect("bound sessions have params");
                    let peer_params = info.peer_params.expect("bound sessions have params");
                    {
                        let node = self.nodes.get_mut(me).expect("session owner exists");
                        node.bound.insert(
                            txn,
                            BoundContract {
                                peer: info.peer.clone(),
                                my_params,
                                peer_params,
                                bind_tick: now,
                            },
                        );
                        node.held_shares.push(HeldShare {
                            owner: info.peer.clone(),
                            size: peer_params.share_size,
                            expiry: now + peer_params.duration,
                            txn,
                        });
                    }
                    self.emit(
                        me,
                        "contract-bound",
                        json!({
                            "peer": info.peer.as_str(),
                            "txn": txn.to_string(),
                            "role": role_str(info.role),
                        }),
                    );
                    self.emit(
                        me,
                        "share-stored",
                        json!({
                            "owner": info.peer.as_str(),
                            "size": peer_params.share_size,
                            "expiry": now + peer_params.duration,
                        }),
                    );
                    self.schedule(
                        now + my_params.duration,
                        WorkItem::ShareExpiry {
                            owner: me.clone(),
                            holder: info.peer.clone(),
                            txn,
                        },
                    );
                }
                SessionEffect::Aborted { reason } => {
                    self.emit(
                        me,
                        "session-aborted",
                        json!({
                            "peer": info.peer.as_str(),
                            "role": role_str(info.role),
                            "reason": reason.as_str(),
                        }),
                    );
                }
            }
        }
    }

    // ---- reputation queries ------------------------------------------------

    fn authority_rep_query(&mut self, me: ServerId, message: Message) {
        let Message::RepQuery { from, about, .. } = &message else {
            return;
        };
        let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
            self.emit(&me, "query-dropped", json!({ "reason": "not-an-authority" }));
            return;
        };
        if state.directory.authority_of(from) != Some(me.clone()) {
            self.emit(&me, "query-dropped", json!({ "reason": "not-my-leaf", "from": from.as_str() }));
            return;
        }
        let Some(subject_authority) = state.directory.authority_of(about) else {
            self.emit(
                &me,
                "query-dropped",
                json!({ "reason": "unknown-subject", "about": about.as_str() }),
            );
            return;
        };
        if subject_authority == me {
            self.send_rep_attest(&me, about.clone(), from.clone());
        } else {
            let nonce = self.sec.fresh_nonce(&me);
            let payload = rep_relay_sign_payload(&me, from, about, nonce);
            let key = self.nodes.get(&me).expect("authority exists").keys.private;
            let sig = self
                .sec
                .sign(&me, &key, &payload)
                .expect("a node holds its own key");
            let relay = Message::RepRelay {
                from_authority: me.clone(),
                requester: from.clone(),
                about: about.clone(),
                nonce,
                sig,
            };
            self.send(&me, &subject_authority, &relay);
        }
    }

    fn authority_rep_relay(&mut self, me: ServerId, message: Message) {
        let Message::RepRelay {
            from_authority,
            requester,
            about,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let verified = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            let is_peer_authority =
                state.directory.authority_of(from_authority) == Some(from_authority.clone());
            let key = state.directory.public_key_of(from_authority);
            match (is_peer_authority, key) {
                (true, Some(key)) => {
                    let payload = rep_relay_sign_payload(from_authority, requester, about, *nonce);
                    self.sec.verify(&payload, sig, &key)
                }
                _ => false,
            }
        };
        if !verified {
            self.emit(
                &me,
                "query-dropped",
                json!({ "reason": "bad-relay-signature", "from": from_authority.as_str() }),
            );
            return;
        }
        self.send_rep_attest(&me, about.clone(), requester.clone());
    }

    /// Signs and sends `{subject, T, GR}` straight to the requester.
    fn send_rep_attest(&mut self, me: &ServerId, subject: ServerId, requester: ServerId) {
        let ledger = self
            .nodes
            .get(me)
            .and_then(|n| n.authority.as_ref())
            .and_then(|s| s.ledgers.get(&subject).cloned());
        let Some(ledger) = ledger else {
            self.emit(
                me,
                "query-dropped",
                json!({ "reason": "no-record", "about": subject.as_str() }),
            );
            return;
        };
        let reputation = global_reputation(&ledger);
        let payload = rep_attest_sign_payload(
            me,
            &subject,
            ledger.transactions(),
            reputation.as_rational(),
        );
        let key = self.nodes.get(me).expect("authority exists").keys.private;
        let sig = self
            .sec
            .sign(me, &key, &payload)
            .expect("a node holds its own key");
        let attest = Message::RepAttest {
            from_authority: me.clone(),
            subject,
            transactions: ledger.transactions(),
            reputation: reputation.as_rational().clone(),
            sig,
        };
        self.send(me, &requester, &attest);
    }

    // ---- registration -------------------------------------------------------

    pub(crate) fn handle_registration_start(&mut self, node_id: ServerId) {
        let authorities: Vec<ServerId> = self.db.subtree_keys.keys().cloned().collect();
        if authorities.is_empty() {
            self.emit(&node_id, "registration-aborted", json!({ "reason": "no-authorities" }));
            return;
        }
        let preferred = self
            .nodes
            .get(&node_id)
            .and_then(|n| n.reg_via.clone())
            .filter(|a| authorities.contains(a));
        let via = preferred.unwrap_or_else(|| {
            use rand_chacha::rand_core::RngCore;
            let mut rng = self
                .sec
                .derived_rng(&format!("join:{}", node_id.as_str()));
            authorities[(rng.next_u64() % authorities.len() as u64) as usize].clone()
        });
        let intro = {
            let node = self.nodes.get_mut(&node_id).expect("declared node");
            let public = node.keys.public;
            let private = node.keys.private;
            make_reg_intro(&node_id, public, &private, &mut self.sec)
        };
        if let Message::RegIntro { nonce, .. } = &intro {
            let node = self.nodes.get_mut(&node_id).expect("declared node");
            node.reg_nonce = Some(*nonce);
            node.reg_via = Some(via.clone());
        }
        self.send(&node_id, &via, &intro);
    }

    fn authority_reg_intro(&mut self, me: ServerId, message: Message) {
        let Message::RegIntro {
            newcomer,
            public_key,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let Some(_) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
            self.emit(&me, "registration-rejected", json!({ "newcomer": newcomer.as_str(), "reason": "not-an-authority" }));
            return;
        };
        // Duplicate pseudonym first, then replay, then the signature.
        let duplicate = self
            .nodes
            .get(&me)
            .and_then(|n| n.authority.as_ref())
            .map(|s| s.directory.contains(newcomer))
            .unwrap_or(false);
        if duplicate {
            self.emit(
                &me,
                "registration-rejected",
                json!({ "newcomer": newcomer.as_str(), "reason": "duplicate" }),
            );
            return;
        }
        {
            let state = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
                .expect("checked above");
            let seen = state.seen_reg_nonces.entry(newcomer.clone()).or_default();
            if !seen.insert(nonce.0) {
                self.emit(
                    &me,
                    "registration-rejected",
                    json!({ "newcomer": newcomer.as_str(), "reason": "replay" }),
                );
                return;
            }
        }
        if !verify_reg_intro(newcomer, *public_key, *nonce, sig, &self.sec) {
            self.emit(
                &me,
                "registration-rejected",
                json!({ "newcomer": newcomer.as_str(), "reason": "bad-signature" }),
            );
            return;
        }
        // Accept: record, acknowledge, flood.
        let ledger = new_ledger(newcomer.clone());
        let subtree_key = {
            let state = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
                .expect("checked above");
            state
                .directory
                .insert(newcomer.clone(), me.clone(), *public_key);
            state.ledgers.insert(newcomer.clone(), ledger.clone());
            state.subtree_key
        };
        self.board_pk.insert(newcomer.clone(), *public_key);
        self.board_authority.insert(newcomer.clone(), me.clone());
        self.emit(
            &me,
            "directory-updated",
            json!({ "node": newcomer.as_str(), "authority": me.as_str() }),
        );
        if let Some(key) = subtree_key {
            let record = DbRecord {
                node: newcomer.clone(),
                ledger,
                authority: me.clone(),
            };
            if let Ok(boxed) = self
                .sec
                .seal(&me, &key, &DbOp::WriteRecord(record).encode())
            {
                let msg = Message::DbWrite {
                    from: me.clone(),
                    boxed,
                };
                let db_id = self.db.id.clone();
                self.send(&me, &db_id, &msg);
            }
        }
        let ack = make_reg_ack(*public_key, *nonce, &self.sec);
        self.send(&me, newcomer, &ack);
        let my_key = self.nodes.get(&me).expect("authority exists").keys.private;
        let flood = make_reg_flood(
            &me,
            &my_key,
            newcomer,
            *public_key,
            *nonce,
            *sig,
            &mut self.sec,
        );
        let others: Vec<ServerId> = self
            .db
            .subtree_keys
            .keys()
            .filter(|a| **a != me)
            .cloned()
            .collect();
        for other in others {
            self.send(&me, &other, &flood);
        }
    }

    fn node_reg_ack(&mut self, me: ServerId, message: Message) {
        let (expected, via) = {
            let Some(node) = self.nodes.get(&me) else {
                return;
            };
            (node.reg_nonce, node.reg_via.clone())
        };
        let Some(expected) = expected else {
            self.emit(&me, "registration-aborted", json!({ "reason": "unexpected-ack" }));
            return;
        };
        match open_reg_ack(&me, &message, &self.sec) {
            Some(value) if value == expected.succ() => {
                let node = self.nodes.get_mut(&me).expect("node exists");
                node.registered = true;
                node.my_authority = via.clone();
                node.reg_nonce = None;
                self.emit(
                    &me,
                    "registration-complete",
                    json!({ "authority": via.map(|a| a.as_str().to_string()) }),
                );
            }
            Some(_) => {
                self.emit(&me, "registration-aborted", json!({ "reason": "wrong-ack-nonce" }));
            }
            None => {
                self.emit(&me, "registration-aborted", json!({ "reason": "unreadable-ack" }));
            }
        }
    }

    fn authority_reg_flood(&mut self, me: ServerId, message: Message) {
        let Message::RegFlood {
            authority,
            newcomer,
            public_key,
            nonce,
            intro_sig,
            sig,
        } = &message
        else {
            return;
        };
        let verified = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            match state.directory.public_key_of(authority) {
                Some(key) => verify_reg_flood(
                    authority, key, newcomer, *public_key, *nonce, intro_sig, sig, &self.sec,
                ),
                None => false,
            }
        };
        if !verified {
            self.emit(
                &me,
                "registration-rejected",
                json!({ "newcomer": newcomer.as_str(), "reason": "bad-flood-signature" }),
            );
            return;
        }
        let state = self
            .nodes
            .get_mut(&me)
            .and_then(|n| n.authority.as_mut())
            .expect("checked above");
        if state.directory.contains(newcomer) {
            self.emit(
                &me,
                "registration-conflict",
                json!({ "newcomer": newcomer.as_str() }),
            );
            return;
        }
        state
            .directory
            .insert(newcomer.clone(), authority.clone(), *public_key);
        self.emit(
            &me,
            "directory-updated",
            json!({ "node": newcomer.as_str(), "authority": authority.as_str() }),
        );
    }

    // ---- shares and feedback -------------------------------------------------

    pub(crate) fn handle_share_expiry(
        &mut self,
        owner: ServerId,
        holder: ServerId,
        txn: TransactionId,
    ) {
        if !self.nodes.get(&owner).map(|n| n.registered).unwrap_or(false) {
            return;
        }
        // The holder's policy decides whether the share survived.
        let retrievable = {
            let Some(holder_node) = self.nodes.get_mut(&holder) else {
                self.emit(&owner, "share-expiry-voided", json!({ "txn": txn.to_string() }));
                return;
            };
            let idx = holder_node
                .held_shares
                .iter()
                .position(|s| s.txn == txn && s.owner == owner);
            let Some(idx) = idx else {
                self.emit(&owner, "share-expiry-voided", json!({ "txn": txn.to_string() }));
                return;
            };
            holder_node.held_shares.remove(idx);
            holder_node.expiry_count += 1;
            match holder_node.honesty {
                Honesty::FailContracts | Honesty::DropFeedback => false,
                Honesty::FailEveryNth(n) => holder_node.expiry_count % n != 0,
                _ => true,
            }
        };
        self.emit(
            &owner,
            "share-expiry",
            json!({
                "holder": holder.as_str(),
                "txn": txn.to_string(),
                "retrievable": retrievable,
            }),
        );
        let score = if retrievable {
            LocalScore::Positive
        } else {
            LocalScore::Negative
        };
        self.send_feedback(owner, holder, txn, score);
    }

    /// Builds and routes the mandatory two-path feedback.
    fn send_feedback(
        &mut self,
        scorer: ServerId,
        target: ServerId,
        txn: TransactionId,
        score: LocalScore,
    ) {
        let (honesty, key) = {
            let Some(node) = self.nodes.get_mut(&scorer) else {
                return;
            };
            if !node.bound.contains_key(&txn) || !node.feedback_sent.insert(txn) {
                return;
            }
            (node.honesty, node.keys.private)
        };
        let authority_of_target = self
            .directory_view_for(&scorer)
            .authority_of(&target)
            .or_else(|| self.board_authority.get(&target).cloned());
        let Some(authority) = authority_of_target else {
            self.emit(&scorer, "feedback-rejected", json!({ "reason": "no-authority-of-record" }));
            return;
        };
        let (via_copy, direct_copy, reported) = match honesty {
            Honesty::FalseScorer => {
                // A flattering copy through the receiver, a damning one
                // straight to the authority.
                let plus = make_feedback(
                    &scorer,
                    &key,
                    &target,
                    txn,
                    LocalScore::Positive,
                    &mut self.sec,
                )
                .expect("a node holds its own key");
                let minus = make_feedback(
                    &scorer,
                    &key,
                    &target,
                    txn,
                    LocalScore::Negative,
                    &mut self.sec,
                )
                .expect("a node holds its own key");
                (plus, minus, "false-scorer")
            }
            _ => {
                let body = make_feedback(&scorer, &key, &target, txn, score, &mut self.sec)
                    .expect("a node holds its own key");
                (body.clone(), body, "honest")
            }
        };
        self.emit(
            &scorer,
            "feedback-sent",
            json!({
                "target": target.as_str(),
                "txn": txn.to_string(),
                "score": score.value(),
                "mode": reported,
            }),
        );
        self.send(&scorer, &target, &via_copy);
        self.send(&scorer, &authority, &direct_copy);
    }

    fn node_feedback(&mut self, me: ServerId, from: ServerId, message: Message, raw: Vec<u8>) {
        let Message::Feedback {
            scorer,
            target,
            txn,
            score,
            ..
        } = &message
        else {
            return;
        };
        if *target == me {
            if self.nodes.get(&me).is_some_and(|n| n.is_authority()) {
                // The scored party is its own authority of record: both
                // delivery paths collapse onto this node. Classify arrivals
                // in order — the scorer sends the two copies back to back.
                let path = {
                    let filled = self
                        .nodes
                        .get(&me)
                        .and_then(|n| n.authority.as_ref())
                        .and_then(|s| s.trackers.get(&(*txn, scorer.clone())))
                        .map(|t| t.has_direct())
                        .unwrap_or(false);
                    if filled {
                        FeedbackPath::ViaReceiver
                    } else {
                        FeedbackPath::Direct
                    }
                };
                self.authority_collect_feedback(me, path, message, raw);
                return;
            }
            // Receiver path: extract the score, then forward (or drop).
            let (honesty, authority) = {
                let Some(node) = self.nodes.get(&me) else {
                    return;
                };
                (node.honesty, node.authority_of_record())
            };
            if honesty == Honesty::DropFeedback && *score == LocalScore::Negative {
                self.emit(
                    &me,
                    "feedback-dropped-by-receiver",
                    json!({
                        "scorer": scorer.as_str(),
                        "txn": txn.to_string(),
                        "score": score.value(),
                    }),
                );
                return;
            }
            let Some(authority) = authority else {
                return;
            };
            self.emit(
                &me,
                "feedback-forwarded",
                json!({ "scorer": scorer.as_str(), "txn": txn.to_string() }),
            );
            self.emit(
                &me,
                "message-sent",
                json!({
                    "to": authority.as_str(),
                    "tag": "feedback",
                    "digest": message_security::digest(&raw).short_hex(),
                }),
            );
            self.transmit(me.clone(), authority, raw);
            return;
        }
        // Authority path, arrival route from the physical sender.
        let path = if from == *scorer {
            FeedbackPath::Direct
        } else if from == *target {
            FeedbackPath::ViaReceiver
        } else {
            self.emit(
                &me,
                "feedback-rejected",
                json!({ "reason": "bad-path", "from": from.as_str() }),
            );
            return;
        };
        self.authority_collect_feedback(me, path, message, raw);
    }

    /// Validates and records one feedback copy at the target's authority.
    fn authority_collect_feedback(
        &mut self,
        me: ServerId,
        path: FeedbackPath,
        message: Message,
        raw: Vec<u8>,
    ) {
        let Message::Feedback {
            scorer,
            target,
            txn,
            score,
            ..
        } = &message
        else {
            return;
        };
        let is_my_leaf = self
            .nodes
            .get(&me)
            .and_then(|n| n.authority.as_ref())
            .map(|s| s.directory.authority_of(target) == Some(me.clone()))
            .unwrap_or(false);
        if !is_my_leaf {
            self.emit(
                &me,
                "feedback-rejected",
                json!({ "reason": "misrouted", "target": target.as_str() }),
            );
            return;
        }
        let dir = self.directory_view_for(&me);
        if !verify_feedback(scorer, txn, *score, sig_of(&message), &dir, &self.sec) {
            self.emit(
                &me,
                "feedback-rejected",
                json!({
                    "reason": "bad-signature",
                    "claimed_scorer": scorer.as_str(),
                    "txn": txn.to_string(),
                }),
            );
            return;
        }
        let timeout = self.feedback_timeout;
        let now = self.now;
        let outcome = {
            let state = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
                .expect("checked above");
            let tracker = state
                .trackers
                .entry((*txn, scorer.clone()))
                .or_insert_with(|| FeedbackTracker::new(*txn, scorer.clone(), target.clone()));
            if tracker.target != *target {
                tracker.mark_conflict();
                self.emit(
                    &me,
                    "feedback-rejected",
                    json!({ "reason": "target-mismatch", "txn": txn.to_string() }),
                );
                return;
            }
            tracker.record_copy(path, *score, &raw, now, timeout)
        };
        match outcome {
            CopyOutcome::Waiting { deadline } => {
                self.schedule(
                    deadline,
                    WorkItem::FeedbackDeadline {
                        authority: me,
                        txn: *txn,
                        scorer: scorer.clone(),
                    },
                );
            }
            CopyOutcome::Duplicate => {
                self.emit(
                    &me,
                    "feedback-duplicate-ignored",
                    json!({ "txn": txn.to_string(), "scorer": scorer.as_str() }),
                );
            }
            CopyOutcome::Decide(decision) => {
                self.resolve_feedback_decision(me, *txn, scorer.clone(), target.clone(), decision);
            }
        }
    }

    pub(crate) fn handle_feedback_deadline(
        &mut self,
        authority: ServerId,
        txn: TransactionId,
        scorer: ServerId,
    ) {
        let decided = {
            let Some(state) = self
                .nodes
                .get_mut(&authority)
                .and_then(|n| n.authority.as_mut())
            else {
                return;
            };
            let Some(tracker) = state.trackers.get_mut(&(txn, scorer.clone())) else {
                return;
            };
            tracker
                .on_deadline()
                .map(|decision| (tracker.target.clone(), decision))
        };
        if let Some((target, decision)) = decided {
            self.resolve_feedback_decision(authority, txn, scorer, target, decision);
        }
    }

    /// Applies a decided outcome, fetching the scorer's weight snapshot
    /// locally or from the scorer's authority.
    fn resolve_feedback_decision(
        &mut self,
        me: ServerId,
        txn: TransactionId,
        scorer: ServerId,
        target: ServerId,
        decision: FeedbackDecision,
    ) {
        if decision.kind == FeedbackOutcomeKind::GiverCheatingFlagged {
            self.emit(
                &me,
                "cheating-detected",
                json!({ "scorer": scorer.as_str(), "txn": txn.to_string() }),
            );
            if self.penalize_cheating_giver {
                self.route_cheating_penalty(&me, txn, &scorer);
            }
            self.apply_feedback_outcome(me, txn, scorer, target, decision, None);
            return;
        }
        let scorer_authority = self
            .nodes
            .get(&me)
            .and_then(|n| n.authority.as_ref())
            .and_then(|s| s.directory.authority_of(&scorer));
        match scorer_authority {
            Some(auth) if auth == me => {
                let weight = {
                    let state = self
                        .nodes
                        .get_mut(&me)
                        .and_then(|n| n.authority.as_mut())
                        .expect("authority state present");
                    freeze_snapshot(state, txn, &scorer)
                };
                self.apply_feedback_outcome(me, txn, scorer, target, decision, Some(weight));
            }
            Some(auth) => {
                let nonce = self.sec.fresh_nonce(&me);
                let payload = weight_query_sign_payload(&me, &scorer, &txn, nonce);
                let key = self.nodes.get(&me).expect("authority exists").keys.private;
                let sig = self
                    .sec
                    .sign(&me, &key, &payload)
                    .expect("a node holds its own key");
                {
                    let state = self
                        .nodes
                        .get_mut(&me)
                        .and_then(|n| n.authority.as_mut())
                        .expect("authority state present");
                    state.pending_weight.insert(
                        (txn, scorer.clone()),
                        PendingApply {
                            decision,
                            target,
                            expected_authority: auth.clone(),
                            query_nonce: nonce,
                        },
                    );
                }
                let query = Message::WeightQuery {
                    from_authority: me.clone(),
                    scorer,
                    txn,
                    nonce,
                    sig,
                };
                self.send(&me, &auth, &query);
            }
            None => {
                self.emit(
                    &me,
                    "feedback-rejected",
                    json!({ "reason": "scorer-authority-unknown", "scorer": scorer.as_str() }),
                );
            }
        }
    }

    /// Optional giver penalty: apply locally when the cheater is ours,
    /// otherwise report to its authority.
    fn route_cheating_penalty(
        &mut self,
        me: &ServerId,
        txn: TransactionId,
        scorer: &ServerId,
    ) {
        let scorer_authority = self
            .nodes
            .get(me)
            .and_then(|n| n.authority.as_ref())
            .and_then(|s| s.directory.authority_of(scorer));
        match scorer_authority {
            Some(auth) if auth == *me => {
                self.apply_cheating_penalty(me.clone(), txn, scorer.clone());
            }
            Some(auth) => {
                let nonce = self.sec.fresh_nonce(me);
                let payload = servnet_protocol::feedback::cheating_report_sign_payload(
                    me, scorer, &txn, nonce,
                );
                let key = self.nodes.get(me).expect("authority exists").keys.private;
                let sig = self
                    .sec
                    .sign(me, &key, &payload)
                    .expect("a node holds its own key");
                let report = Message::CheatingReport {
                    from_authority: me.clone(),
                    scorer: scorer.clone(),
                    txn,
                    nonce,
                    sig,
                };
                self.send(me, &auth, &report);
            }
            None => {}
        }
    }

    /// Unit-weight -1 against a flagged giver's own ledger.
    fn apply_cheating_penalty(&mut self, me: ServerId, txn: TransactionId, scorer: ServerId) {
        let applied = {
            let Some(state) = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
            else {
                return;
            };
            if !state.penalties_applied.insert((txn, scorer.clone())) {
                return;
            }
            let Some(ledger) = state.ledgers.get(&scorer) else {
                return;
            };
            let next = apply_feedback(
                ledger,
                LocalScore::Negative,
                &GlobalReputation::from_integer(1),
                WeightMode::Unit,
            );
            state.ledgers.insert(scorer.clone(), next.clone());
            state.subtree_key.map(|key| (next, key))
        };
        let Some((ledger, key)) = applied else {
            return;
        };
        self.emit(
            &me,
            "cheating-penalty-applied",
            json!({
                "scorer": scorer.as_str(),
                "txn": txn.to_string(),
                "ledger_after": crate::log::ledger_payload(&ledger),
            }),
        );
        let record = DbRecord {
            node: scorer.clone(),
            ledger,
            authority: me.clone(),
        };
        if let Ok(boxed) = self
            .sec
            .seal(&me, &key, &DbOp::WriteRecord(record).encode())
        {
            let msg = Message::DbWrite {
                from: me.clone(),
                boxed,
            };
            let db_id = self.db.id.clone();
            self.send(&me, &db_id, &msg);
        }
    }

    fn authority_cheating_report(&mut self, me: ServerId, message: Message) {
        let Message::CheatingReport {
            from_authority,
            scorer,
            txn,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let verified = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            let is_peer_authority =
                state.directory.authority_of(from_authority) == Some(from_authority.clone());
            match (is_peer_authority, state.directory.public_key_of(from_authority)) {
                (true, Some(key)) => {
                    let payload = servnet_protocol::feedback::cheating_report_sign_payload(
                        from_authority,
                        scorer,
                        txn,
                        *nonce,
                    );
                    self.sec.verify(&payload, sig, &key)
                }
                _ => false,
            }
        };
        if !verified {
            self.emit(&me, "query-dropped", json!({ "reason": "bad-cheating-report" }));
            return;
        }
        self.apply_cheating_penalty(me, *txn, scorer.clone());
    }

    fn authority_weight_query(&mut self, me: ServerId, message: Message) {
        let Message::WeightQuery {
            from_authority,
            scorer,
            txn,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let verified = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            let is_peer_authority =
                state.directory.authority_of(from_authority) == Some(from_authority.clone());
            match (is_peer_authority, state.directory.public_key_of(from_authority)) {
                (true, Some(key)) => {
                    let payload = weight_query_sign_payload(from_authority, scorer, txn, *nonce);
                    self.sec.verify(&payload, sig, &key)
                }
                _ => false,
            }
        };
        if !verified {
            self.emit(&me, "query-dropped", json!({ "reason": "bad-weight-query" }));
            return;
        }
        let reply = {
            let state = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
                .expect("checked above");
            if !state.ledgers.contains_key(scorer) {
                None
            } else {
                let transactions = state.ledgers[scorer].transactions();
                let weight = freeze_snapshot(state, *txn, scorer);
                Some((transactions, weight))
            }
        };
        let Some((transactions, weight)) = reply else {
            self.emit(
                &me,
                "query-dropped",
                json!({ "reason": "no-record", "about": scorer.as_str() }),
            );
            return;
        };
        let ack_nonce = nonce.succ();
        let payload =
            weight_attest_sign_payload(&me, scorer, txn, transactions, &weight, ack_nonce);
        let key = self.nodes.get(&me).expect("authority exists").keys.private;
        let attest_sig = self
            .sec
            .sign(&me, &key, &payload)
            .expect("a node holds its own key");
        let attest = Message::WeightAttest {
            from_authority: me.clone(),
            scorer: scorer.clone(),
            txn: *txn,
            transactions,
            reputation: weight,
            ack_nonce,
            sig: attest_sig,
        };
        self.send(&me, from_authority, &attest);
    }

    fn authority_weight_attest(&mut self, me: ServerId, message: Message) {
        let Message::WeightAttest {
            from_authority,
            scorer,
            txn,
            transactions,
            reputation,
            ack_nonce,
            sig,
        } = &message
        else {
            return;
        };
        let pending = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            state.pending_weight.get(&(*txn, scorer.clone())).cloned()
        };
        let Some(pending) = pending else {
            self.emit(&me, "weight-attest-rejected", json!({ "reason": "no-pending" }));
            return;
        };
        let dir = self.directory_view_for(&me);
        let key = dir.public_key_of(&pending.expected_authority);
        let payload =
            weight_attest_sign_payload(from_authority, scorer, txn, *transactions, reputation, *ack_nonce);
        let ok = *from_authority == pending.expected_authority
            && *ack_nonce == pending.query_nonce.succ()
            && key.is_some_and(|k| self.sec.verify(&payload, sig, &k))
            && GlobalReputation::from_rational(reputation.clone()).is_ok();
        {
            let state = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
                .expect("checked above");
            state.pending_weight.remove(&(*txn, scorer.clone()));
        }
        if !ok {
            self.emit(&me, "weight-attest-rejected", json!({ "reason": "verification-failed" }));
            return;
        }
        self.apply_feedback_outcome(
            me,
            *txn,
            scorer.clone(),
            pending.target,
            pending.decision,
            Some(reputation.clone()),
        );
    }

    /// The single place a feedback outcome touches a ledger. The target's
    /// own snapshot freezes first so the mirror feedback of the same
    /// transaction weighs the pre-update value.
    fn apply_feedback_outcome(
        &mut self,
        me: ServerId,
        txn: TransactionId,
        scorer: ServerId,
        target: ServerId,
        decision: FeedbackDecision,
        weight: Option<Rational>,
    ) {
        let mode = self.weight_mode;
        let applied = {
            let Some(state) = self
                .nodes
                .get_mut(&me)
                .and_then(|n| n.authority.as_mut())
            else {
                return;
            };
            if !state.ledgers.contains_key(&target) {
                None
            } else {
                freeze_snapshot(state, txn, &target);
                let ledger = state.ledgers.get(&target).expect("checked above");
                let next = match (&decision.kind, &decision.score, &weight) {
                    (FeedbackOutcomeKind::GiverCheatingFlagged, _, _) => {
                        record_unscored_transaction(ledger)
                    }
                    (_, Some(score), Some(w)) => {
                        let scorer_rep = GlobalReputation::from_rational(w.clone())
                            .expect("weights are frozen reputations");
                        apply_feedback(ledger, *score, &scorer_rep, mode)
                    }
                    _ => return,
                };
                state.ledgers.insert(target.clone(), next.clone());
                state.subtree_key.map(|key| (next, key))
            }
        };
        let Some((ledger, key)) = applied else {
            self.emit(
                &me,
                "feedback-rejected",
                json!({ "reason": "target-not-mine", "target": target.as_str() }),
            );
            return;
        };
        self.emit(
            &me,
            "feedback-outcome",
            json!({
                "txn": txn.to_string(),
                "scorer": scorer.as_str(),
                "target": target.as_str(),
                "outcome": decision.kind.as_str(),
                "score": decision.score.map(|s| s.value()),
                "weight": weight.as_ref().map(to_ratio_string),
                "mode": match mode {
                    WeightMode::Unit => "unit",
                    WeightMode::ReputationWeighted => "reputation-weighted",
                },
                "ledger_after": crate::log::ledger_payload(&ledger),
            }),
        );
        let record = DbRecord {
            node: target.clone(),
            ledger,
            authority: me.clone(),
        };
        if let Ok(boxed) = self
            .sec
            .seal(&me, &key, &DbOp::WriteRecord(record).encode())
        {
            let msg = Message::DbWrite {
                from: me.clone(),
                boxed,
            };
            let db_id = self.db.id.clone();
            self.send(&me, &db_id, &msg);
        }
    }

    // ---- rotation participation ----------------------------------------------

    fn node_rotate_grant(&mut self, me: ServerId, message: Message) {
        let Message::RotateGrant {
            db,
            key_box,
            new_authority,
            ..
        } = &message
        else {
            return;
        };
        if *new_authority != me || *db != self.db.id {
            self.emit(&me, "rotate-grant-rejected", json!({ "reason": "not-addressed-to-me" }));
            return;
        }
        let Ok(bytes) = self.sec.open_public(&me, key_box) else {
            self.emit(&me, "rotate-grant-rejected", json!({ "reason": "unreadable" }));
            return;
        };
        let Some((key, named, nonce, inner_sig)) = parse_key_grant(&bytes) else {
            self.emit(&me, "rotate-grant-rejected", json!({ "reason": "bad-grant" }));
            return;
        };
        let db_pk = self.nodes.get(&me).expect("node exists").db_public_key;
        let payload = key_grant_sign_payload(key, &named, nonce);
        if named != me || !self.sec.verify(&payload, &inner_sig, &db_pk) {
            self.emit(&me, "rotate-grant-rejected", json!({ "reason": "bad-db-signature" }));
            return;
        }
        // Possession of the grant is possession of the key.
        self.sec.grant_symmetric(key, &me);
        self.emit(&me, "rotate-grant-accepted", json!({ "key": key.to_string() }));
        let confirm = self
            .sec
            .seal(&me, &key, &rotate_confirm_payload(nonce))
            .expect("just granted");
        let msg = Message::RotateConfirm {
            from: me.clone(),
            boxed: confirm,
        };
        let db_id = self.db.id.clone();
        self.send(&me, &db_id, &msg);
    }

    fn node_change_notice(&mut self, me: ServerId, message: Message) {
        let Message::ChangeNotice {
            db,
            new_authority,
            old_authority,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let db_pk = self.nodes.get(&me).map(|n| n.db_public_key);
        let Some(db_pk) = db_pk else {
            return;
        };
        if !verify_change_notice(db, new_authority, old_authority, *nonce, sig, db_pk, &self.sec) {
            self.emit(
                &me,
                "change-notice-ignored",
                json!({
                    "reason": "bad-db-signature",
                    "claimed_new": new_authority.as_str(),
                }),
            );
            return;
        }
        self.emit(
            &me,
            "change-notice-accepted",
            json!({ "new": new_authority.as_str(), "old": old_authority.as_str() }),
        );
        let node = self.nodes.get_mut(&me).expect("node exists");
        if node.my_authority.as_ref() == Some(old_authority) {
            node.my_authority = Some(new_authority.clone());
        }
        if let Some(state) = node.authority.as_mut() {
            let moved: Vec<ServerId> = state
                .directory
                .entries()
                .filter(|(_, a)| *a == old_authority)
                .map(|(n, _)| n.clone())
                .collect();
            for n in moved {
                state.directory.set_authority(&n, new_authority.clone());
            }
            state
                .directory
                .set_authority(new_authority, new_authority.clone());
        }
    }

    fn authority_revoke_notice(&mut self, me: ServerId, message: Message) {
        let Message::RevokeNotice {
            authority,
            leaving,
            nonce,
            sig,
        } = &message
        else {
            return;
        };
        let verified = {
            let Some(state) = self.nodes.get(&me).and_then(|n| n.authority.as_ref()) else {
                return;
            };
            match state.directory.public_key_of(authority) {
                Some(key) => {
                    let payload = revoke_notice_sign_payload(authority, leaving, *nonce);
                    self.sec.verify(&payload, sig, &key)
                }
                None => false,
            }
        };
        if !verified {
            self.emit(&me, "revoke-notice-ignored", json!({ "reason": "bad-signature" }));
            return;
        }
        if let Some(state) = self.nodes.get_mut(&me).and_then(|n| n.authority.as_mut()) {
            state.directory.remove(leaving);
        }
        self.emit(
            &me,
            "revoke-notice-applied",
            json!({ "leaving": leaving.as_str() }),
        );
    }

    fn authority_db_read_result(&mut self, me: ServerId, message: Message) {
        let Message::DbReadResult { boxed, .. } = &message else {
            return;
        };
        let key = self
            .nodes
            .get(&me)
            .and_then(|n| n.authority.as_ref())
            .and_then(|s| s.subtree_key);
        let Some(key) = key else {
            return;
        };
        let Ok(bytes) = self.sec.open(&me, boxed, &key) else {
            self.emit(&me, "db-reply-unreadable", json!({}));
            return;
        };
        let Ok(reply) = DbReply::decode(&bytes) else {
            self.emit(&me, "db-reply-unreadable", json!({}));
            return;
        };
        let state = self
            .nodes
            .get_mut(&me)
            .and_then(|n| n.authority.as_mut())
            .expect("checked above");
        // A read issued at takeover can race a concurrent revocation's
        // record removal; only nodes still in the directory are installed.
        let mut count = 0usize;
        for record in reply.records {
            if !state.directory.contains(&record.node) {
                continue;
            }
            state
                .ledgers
                .insert(record.node.clone(), record.ledger.clone());
            count += 1;
        }
        self.emit(&me, "ledgers-loaded", json!({ "count": count }));
    }

    // ---- the database server ----------------------------------------------------

    pub(crate) fn handle_db_message(&mut self, _from: ServerId, message: Message) {
        let db_id = self.db.id.clone();
        match &message {
            Message::DbWrite { from, boxed } | Message::DbRead { from, boxed } => {
                if let Some(reason) = self.db.denial_reason(from, boxed.key) {
                    self.emit(
                        &db_id,
                        "db-access-denied",
                        json!({ "actor": from.as_str(), "reason": reason }),
                    );
                    return;
                }
                let key = self.db.subtree_keys[from];
                let Ok(bytes) = self.sec.open(&db_id, &boxed.clone(), &key) else {
                    self.emit(
                        &db_id,
                        "db-access-denied",
                        json!({ "actor": from.as_str(), "reason": "unsealing-failed" }),
                    );
                    return;
                };
                let Ok(op) = DbOp::decode(&bytes) else {
                    self.emit(
                        &db_id,
                        "db-access-denied",
                        json!({ "actor": from.as_str(), "reason": "bad-payload" }),
                    );
                    return;
                };
                match op {
                    DbOp::WriteRecord(record) => {
                        if record.authority != *from {
                            self.emit(
                                &db_id,
                                "db-access-denied",
                                json!({ "actor": from.as_str(), "reason": "foreign-record" }),
                            );
                            return;
                        }
                        self.db.records.insert(record.node.clone(), record);
                        self.emit(
                            &db_id,
                            "db-access-ok",
                            json!({ "actor": from.as_str(), "op": "write" }),
                        );
                    }
                    DbOp::Remove(node) => {
                        self.db.records.remove(&node);
                        self.emit(
                            &db_id,
                            "db-access-ok",
                            json!({ "actor": from.as_str(), "op": "remove" }),
                        );
                    }
                    DbOp::ReadSubtree => {
                        let records: Vec<DbRecord> = self
                            .db
                            .records
                            .values()
                            .filter(|r| &r.authority == from)
                            .cloned()
                            .collect();
                        let reply = DbReply { records };
                        let boxed = self
                            .sec
                            .seal(&db_id, &key, &reply.encode())
                            .expect("the DB holds every current key");
                        self.emit(
                            &db_id,
                            "db-access-ok",
                            json!({ "actor": from.as_str(), "op": "read" }),
                        );
                        let msg = Message::DbReadResult {
                            from: db_id.clone(),
                            boxed,
                        };
                        self.send(&db_id, from, &msg);
                    }
                }
            }
            Message::RotateInit { from, boxed } => self.db_rotate_init(from.clone(), boxed.clone()),
            Message::RotateConfirm { from, boxed } => {
                self.db_rotate_confirm(from.clone(), boxed.clone())
            }
            _ => {
                self.emit(
                    &db_id,
                    "unmatched-message",
                    json!({ "tag": message.tag_name() }),
                );
            }
        }
    }

    fn db_rotate_init(&mut self, from: ServerId, boxed: message_security::SealedBox) {
        let db_id = self.db.id.clone();
        if let Some(reason) = self.db.denial_reason(&from, boxed.key) {
            self.emit(
                &db_id,
                "db-access-denied",
                json!({ "actor": from.as_str(), "reason": reason, "op": "rotate-init" }),
            );
            return;
        }
        let key = self.db.subtree_keys[&from];
        let Ok(bytes) = self.sec.open(&db_id, &boxed, &key) else {
            self.emit(
                &db_id,
                "db-access-denied",
                json!({ "actor": from.as_str(), "reason": "unsealing-failed", "op": "rotate-init" }),
            );
            return;
        };
        let Some((new, old, _nonce)) = parse_rotate_init(&bytes) else {
            self.emit(
                &db_id,
                "db-access-denied",
                json!({ "actor": from.as_str(), "reason": "bad-payload", "op": "rotate-init" }),
            );
            return;
        };
        let member_of_subtree = self
            .db
            .records
            .get(&new)
            .map(|r| r.authority == from)
            .unwrap_or(false);
        if old != from || !member_of_subtree || self.db.pending_rotations.contains_key(&new) {
            self.emit(
                &db_id,
                "db-access-denied",
                json!({ "actor": from.as_str(), "reason": "invalid-rotation", "op": "rotate-init" }),
            );
            return;
        }
        self.emit(
            &db_id,
            "db-access-ok",
            json!({ "actor": from.as_str(), "op": "rotate-init" }),
        );
        let new_key = self.sec.mint_symmetric_key(std::slice::from_ref(&db_id));
        let db_nonce = self.sec.fresh_nonce(&db_id);
        let db_key = self.db.keys.private;
        let grant_signed = self
            .sec
            .sign(&db_id, &db_key, &key_grant_sign_payload(new_key, &new, db_nonce))
            .expect("the DB holds its key");
        let notice_sig = self
            .sec
            .sign(
                &db_id,
                &db_key,
                &change_notice_sign_payload(&db_id, &new, &old, db_nonce),
            )
            .expect("the DB holds its key");
        self.db.pending_rotations.insert(
            new.clone(),
            PendingRotation {
                old: old.clone(),
                new: new.clone(),
                new_key,
                db_nonce,
            },
        );
        let new_pk = self.board_pk[&new];
        let key_box = self
            .sec
            .seal_to_public(&new_pk, &key_grant_payload(new_key, &new, db_nonce, &grant_signed));
        self.emit(
            &db_id,
            "rotation-initiated",
            json!({ "old": old.as_str(), "new": new.as_str() }),
        );
        let grant = Message::RotateGrant {
            db: db_id.clone(),
            key_box,
            new_authority: new.clone(),
            old_authority: old,
            notice_nonce: db_nonce,
            notice_sig,
        };
        self.send(&db_id, &new, &grant);
    }

    fn db_rotate_confirm(&mut self, from: ServerId, boxed: message_security::SealedBox) {
        let db_id = self.db.id.clone();
        let Some(pending) = self.db.pending_rotations.get(&from).cloned() else {
            self.emit(
                &db_id,
                "db-access-denied",
                json!({ "actor": from.as_str(), "reason": "no-pending-rotation", "op": "rotate-confirm" }),
            );
            return;
        };
        let Ok(bytes) = self.sec.open(&db_id, &boxed, &pending.new_key) else {
            self.db.pending_rotations.remove(&from);
            self.emit(
                &db_id,
                "rotation-rolled-back",
                json!({ "old": pending.old.as_str(), "new": pending.new.as_str(), "reason": "wrong-key" }),
            );
            if let Some(state) = self
                .nodes
                .get_mut(&pending.old)
                .and_then(|n| n.authority.as_mut())
            {
                state.rotation_pending = false;
            }
            return;
        };
        let confirmed = parse_rotate_confirm(&bytes);
        if confirmed != Some(pending.db_nonce.succ()) {
            self.db.pending_rotations.remove(&from);
            self.emit(
                &db_id,
                "rotation-rolled-back",
                json!({ "old": pending.old.as_str(), "new": pending.new.as_str(), "reason": "wrong-nonce" }),
            );
            self.emit(
                &db_id,
                "rotation-alarm",
                json!({ "new": pending.new.as_str() }),
            );
            // The incumbent stays in office and must be electable again.
            if let Some(state) = self
                .nodes
                .get_mut(&pending.old)
                .and_then(|n| n.authority.as_mut())
            {
                state.rotation_pending = false;
            }
            return;
        }
        self.emit(
            &db_id,
            "db-access-ok",
            json!({ "actor": from.as_str(), "op": "rotate-confirm" }),
        );
        self.db.pending_rotations.remove(&from);
        let old_key = self.db.subtree_keys.remove(&pending.old);
        if let Some(old_key) = old_key {
            self.db.revoked_keys.insert(old_key);
        }
        self.db.subtree_keys.insert(pending.new.clone(), pending.new_key);
        let members: Vec<ServerId> = self
            .db
            .records
            .values()
            .filter(|r| r.authority == pending.old)
            .map(|r| r.node.clone())
            .collect();
        for member in &members {
            if let Some(record) = self.db.records.get_mut(member) {
                record.authority = pending.new.clone();
            }
        }
        self.emit(
            &db_id,
            "rotation-committed",
            json!({
                "old": pending.old.as_str(),
                "new": pending.new.as_str(),
                "subtree": members.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            }),
        );
        // DB-signed notice, verbatim, to the affected subtree and every
        // authority so directories converge.
        let notice_sig = self
            .sec
            .sign(
                &db_id,
                &self.db.keys.private.clone(),
                &change_notice_sign_payload(&db_id, &pending.new, &pending.old, pending.db_nonce),
            )
            .expect("the DB holds its key");
        let notice = Message::ChangeNotice {
            db: db_id.clone(),
            new_authority: pending.new.clone(),
            old_authority: pending.old.clone(),
            nonce: pending.db_nonce,
            sig: notice_sig,
        };
        let mut recipients: std::collections::BTreeSet<ServerId> = members.into_iter().collect();
        recipients.extend(self.db.subtree_keys.keys().cloned());
        recipients.remove(&pending.new);
        recipients.remove(&db_id);
        for recipient in recipients {
            self.send(&db_id, &recipient, &notice);
        }
        self.commit_rotation_roles(&pending.old, &pending.new, pending.new_key);
    }

    // ---- adversary triggers -------------------------------------------------------

    pub(crate) fn handle_adversary_trigger(&mut self, index: usize) {
        let action = self.adversary_actions[index].clone();
        let adv_id = self
            .adversary
            .as_ref()
            .expect("actions imply an adversary")
            .id
            .clone();
        match action {
            AdversaryAction::Impersonate { victim, target, .. } => {
                let victim = ServerId::new(victim.as_str());
                let target = ServerId::new(target.as_str());
                let key = crate::adversary::link_key(&victim, &target);
                let injection = {
                    let adversary = self.adversary.as_ref().expect("present");
                    let Some(interposer) = self.interposers.get_mut(&key) else {
                        return;
                    };
                    interposer.start_impersonation(&mut self.sec, adversary)
                };
                if let Some((from, to, bytes)) = injection {
                    self.emit(
                        &adv_id,
                        "adversary-impersonation-started",
                        json!({ "victim": from.as_str(), "target": to.as_str() }),
                    );
                    self.inject_raw(from, to, bytes);
                }
            }
            AdversaryAction::Replay {
                a, b, capture, ..
            } => {
                let from = ServerId::new(a.as_str());
                let to = ServerId::new(b.as_str());
                let key = crate::adversary::link_key(&from, &to);
                let bytes = self.interposers.get(&key).and_then(|i| {
                    i.captures
                        .iter()
                        .find(|c| c.tag == capture && c.from == from && c.to == to)
                        .and_then(|c| c.bytes.clone())
                });
                match bytes {
                    Some(bytes) => {
                        self.emit(
                            &adv_id,
                            "adversary-replayed",
                            json!({ "tag": capture, "to": to.as_str() }),
                        );
                        self.inject_raw(from, to, bytes);
                    }
                    None => {
                        self.emit(&adv_id, "adversary-replay-empty", json!({ "tag": capture }));
                    }
                }
            }
            AdversaryAction::ForgeFeedback {
                as_scorer,
                target,
                score,
                ..
            } => {
                let victim = ServerId::new(as_scorer.as_str());
                let target = ServerId::new(target.as_str());
                let key = crate::adversary::link_key(&victim, &target);
                let txn = self
                    .interposers
                    .get(&key)
                    .and_then(|i| i.observe.as_ref())
                    .and_then(|o| o.txn);
                let Some(txn) = txn else {
                    self.emit(&adv_id, "adversary-observe-empty", json!({}));
                    return;
                };
                let score = LocalScore::from_value(score).expect("validated by the script");
                let payload =
                    servnet_protocol::feedback::feedback_sign_payload(&txn, score, &victim);
                let victim_key = self.nodes[&victim].keys.private;
                if let Err(err) = self.sec.sign(&adv_id, &victim_key, &payload) {
                    self.emit(
                        &adv_id,
                        "sign-rejected",
                        json!({ "victim": victim.as_str(), "error": err.to_string() }),
                    );
                }
                let own_key = self
                    .adversary
                    .as_ref()
                    .expect("present")
                    .keys
                    .private;
                let sig = self
                    .sec
                    .sign(&adv_id, &own_key, &payload)
                    .expect("the adversary holds its own key");
                let forged = Message::Feedback {
                    scorer: victim.clone(),
                    target: target.clone(),
                    txn,
                    score,
                    sig,
                };
                let Some(authority) = self.board_authority.get(&target).cloned() else {
                    return;
                };
                self.emit(
                    &adv_id,
                    "adversary-forged-feedback",
                    json!({ "as_scorer": victim.as_str(), "target": target.as_str() }),
                );
                // Spoofed physical origin: on-path injection.
                self.inject_raw(victim, authority, forged.encode());
            }
            AdversaryAction::FakeAuthorityNotice {
                actor,
                claimed_new,
                claimed_old,
                ..
            } => {
                let actor = ServerId::new(actor.as_str());
                let claimed_new = ServerId::new(claimed_new.as_str());
                let claimed_old = ServerId::new(claimed_old.as_str());
                let db_id = self.db.id.clone();
                let nonce = self.sec.fresh_nonce(&actor);
                let payload =
                    change_notice_sign_payload(&db_id, &claimed_new, &claimed_old, nonce);
                // The actor cannot produce the DB's signature; it signs with
                // its own key and the leaves refuse the notice.
                let actor_key = self.nodes[&actor].keys.private;
                let sig = self
                    .sec
                    .sign(&actor, &actor_key, &payload)
                    .expect("a node holds its own key");
                let notice = Message::ChangeNotice {
                    db: db_id,
                    new_authority: claimed_new,
                    old_authority: claimed_old.clone(),
                    nonce,
                    sig,
                };
                self.emit(&adv_id, "adversary-fake-notice", json!({ "actor": actor.as_str() }));
                let recipients: Vec<ServerId> = self
                    .board_authority
                    .iter()
                    .filter(|(n, a)| **a == claimed_old && **n != actor)
                    .map(|(n, _)| n.clone())
                    .collect();
                for recipient in recipients {
                    self.send(&actor, &recipient, &notice);
                }
            }
            AdversaryAction::RogueRotateInit { actor, .. } => {
                let actor = ServerId::new(actor.as_str());
                let authority = self
                    .board_authority
                    .get(&actor)
                    .cloned()
                    .unwrap_or_else(|| actor.clone());
                let db_id = self.db.id.clone();
                let nonce = self.sec.fresh_nonce(&actor);
                let payload = rotate_init_payload(&actor, &authority, nonce);
                // The subtree key is held only by the authority and the DB;
                // the seal attempt fails.
                if let Some(subtree_key) = self.db.subtree_keys.get(&authority).copied() {
                    if let Err(err) = self.sec.seal(&actor, &subtree_key, &payload) {
                        self.emit(
                            &actor,
                            "seal-rejected",
                            json!({ "key": subtree_key.to_string(), "error": err.to_string() }),
                        );
                    }
                }
                // Fall back to a key the actor does hold; the DB refuses it.
                let own_key = self.sec.mint_symmetric_key(std::slice::from_ref(&actor));
                let boxed = self
                    .sec
                    .seal(&actor, &own_key, &payload)
                    .expect("just minted for the actor");
                self.emit(&adv_id, "adversary-rogue-rotate", json!({ "actor": actor.as_str() }));
                let msg = Message::RotateInit {
                    from: actor.clone(),
                    boxed,
                };
                self.send(&actor, &db_id, &msg);
            }
            AdversaryAction::MitmTamper { .. } | AdversaryAction::SubstituteBinding { .. } => {
                // Passive behaviors; armed at injection time.
            }
        }
    }
}

fn session_info(session: &ContractSession) -> SessionInfo {
    SessionInfo {
        peer: session.peer.clone(),
        role: session.role,
        my_params: session.my_params,
        peer_params: session.peer_params,
    }
}

fn sig_of(message: &Message) -> &message_security::Signature {
    match message {
        Message::Feedback { sig, .. } => sig,
        _ => unreachable!("only called for feedback"),
    }
}

/// Freezes (or returns the existing) reputation snapshot for `(txn, node)`.
fn freeze_snapshot(
    state: &mut crate::node::AuthorityState,
    txn: TransactionId,
    node: &ServerId,
) -> Rational {
    if let Some(existing) = state.snapshots.get(&(txn, node.clone())) {
        return existing.clone();
    }
    let value = state
        .ledgers
        .get(node)
        .map(|l| global_reputation(l).into_rational())
        .unwrap_or_else(|| GlobalReputation::zero().into_rational());
    state
        .snapshots
        .insert((txn, node.clone()), value.clone());
    value
}

/// Finds the session an incoming message belongs to.
fn find_session<'a>(
    node: &'a mut crate::node::Node,
    message: &Message,
) -> Option<&'a mut ContractSession> {
    match message {
        Message::ContractReject { from, ack_nonce } => {
            let prev = ack_nonce.0.wrapping_sub(1);
            // Prefer the exact nonce match on either role, then any live
            // session with that peer so stale rejects still abort it.
            let init_exact = node.initiator_sessions.iter().position(|s| {
                s.peer == *from
                    && s.state == SessionState::Sent1
                    && s.my_nonce.map(|n| n.0) == Some(prev)
            });
            if let Some(i) = init_exact {
                return node.initiator_sessions.get_mut(i);
            }
            let resp_exact = node.responder_sessions.iter().position(|s| {
                s.peer == *from
                    && s.state == SessionState::Sent5
                    && s.my_nonce.map(|n| n.0) == Some(prev)
            });
            if let Some(i) = resp_exact {
                return node.responder_sessions.get_mut(i);
            }
            if let Some(i) = node
                .initiator_sessions
                .iter()
                .position(|s| s.peer == *from && s.state == SessionState::Sent1)
            {
                return node.initiator_sessions.get_mut(i);
            }
            node.responder_sessions
                .iter()
                .position(|s| s.peer == *from && s.state == SessionState::Sent5)
                .and_then(|i| node.responder_sessions.get_mut(i))
        }
        Message::ContractCounter { from, to, .. } => {
            if to != &node.id {
                return None;
            }
            node.initiator_sessions
                .iter()
                .position(|s| s.peer == *from && s.state == SessionState::Sent1)
                .and_then(|i| node.initiator_sessions.get_mut(i))
        }
        Message::ContractAck { from, ack_nonce } => {
            let prev = ack_nonce.0.wrapping_sub(1);
            let exact = node.responder_sessions.iter().position(|s| {
                s.peer == *from
                    && s.state == SessionState::Sent5
                    && s.my_nonce.map(|n| n.0) == Some(prev)
            });
            let idx = exact.or_else(|| {
                node.responder_sessions
                    .iter()
                    .position(|s| s.peer == *from && s.state == SessionState::Sent5)
            });
            idx.and_then(|i| node.responder_sessions.get_mut(i))
        }
        Message::BindingHash { from, .. } => node
            .responder_sessions
            .iter()
            .position(|s| s.peer == *from && s.state == SessionState::AwaitHash)
            .and_then(|i| node.responder_sessions.get_mut(i)),
        Message::BindingHashAck { from, .. } => node
            .initiator_sessions
            .iter()
            .position(|s| s.peer == *from && s.state == SessionState::Sent9)
            .and_then(|i| node.initiator_sessions.get_mut(i)),
        Message::RepAttest { subject, .. } => {
            let init = node
                .initiator_sessions
                .iter()
                .position(|s| s.peer == *subject && s.state == SessionState::AwaitRep);
            if let Some(i) = init {
                return node.initiator_sessions.get_mut(i);
            }
            node.responder_sessions
                .iter()
                .position(|s| s.peer == *subject && s.state == SessionState::AwaitRep)
                .and_then(|i| node.responder_sessions.get_mut(i))
        }
        _ => None,
    }
}
