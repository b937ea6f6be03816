//! Contract establishment: the eleven-message negotiation that ends with
//! both parties signing hashes over their local transcripts of messages 1,
//! 5 and 9.
//!
//! Each side runs a [`ContractSession`]. Transitions consume the decoded
//! message together with its raw canonical bytes — the bytes are what enter
//! the transcript, so any in-flight tampering surfaces as a hash mismatch
//! when messages 10 and 11 are checked.

use message_security::{digest, Nonce, PrivateKeyHandle, SecurityCtx, TransactionId};
use reputation_core::{GlobalReputation, Rational, ServerId};

use crate::directory::DirectoryView;
use crate::wire::{sign_payload, Message, TAG_BINDING_HASH, TAG_BINDING_HASH_ACK};
use crate::{Tick, TradeParams};

/// Which side of the negotiation this session is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

/// Why a session ended without binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    /// A message type that is illegal in the current state.
    ProtocolViolation,
    /// A reputation attestation failed signature or origin checks.
    BadAuthorityAttestation,
    /// An acknowledgment nonce did not match `N + 1`.
    StaleOrReplay,
    /// The peer or an authority stopped answering.
    Timeout,
    /// The transcript hashes of the two sides disagree.
    TranscriptMismatch,
    /// Message 10 or 11 carried a signature that does not verify.
    ForgedBinding,
    /// The peer sent a Reject; clean end, no feedback owed.
    PeerRejected,
    /// Our own policy declined the trade; clean end.
    PolicyRejected,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::ProtocolViolation => "protocol-violation",
            AbortReason::BadAuthorityAttestation => "bad-authority-attestation",
            AbortReason::StaleOrReplay => "stale-or-replay",
            AbortReason::Timeout => "timeout",
            AbortReason::TranscriptMismatch => "transcript-mismatch",
            AbortReason::ForgedBinding => "forged-binding",
            AbortReason::PeerRejected => "peer-rejected",
            AbortReason::PolicyRejected => "policy-rejected",
        }
    }
}

/// Session progress. `Done` means CONTRACT_BOUND and is reachable only after
/// the transcript hash check passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    /// Initiator: proposal sent, awaiting 5a/5b.
    Sent1,
    /// Awaiting the reputation attestation (message 4 or 8).
    AwaitRep,
    /// Responder: counter sent, awaiting 9a/9b.
    Sent5,
    /// Initiator: ack and binding hash sent, awaiting message 11.
    Sent9,
    /// Responder: ack received, awaiting message 10.
    AwaitHash,
    Done,
    Aborted(AbortReason),
}

/// Whether to accept a trade given the peer's attested standing.
pub trait AcceptPolicy {
    fn accept(
        &self,
        peer: &ServerId,
        peer_reputation: &GlobalReputation,
        peer_transactions: u64,
        proposed: &TradeParams,
    ) -> bool;
}

/// Default policy: the proposed share must fit capacity and the peer's
/// reputation must reach the threshold; optionally a peer with no history at
/// all is given the benefit of the doubt.
#[derive(Debug, Clone)]
pub struct ThresholdPolicy {
    pub threshold: Rational,
    pub newcomer_grace: bool,
    pub capacity: u64,
}

impl AcceptPolicy for ThresholdPolicy {
    fn accept(
        &self,
        _peer: &ServerId,
        peer_reputation: &GlobalReputation,
        peer_transactions: u64,
        proposed: &TradeParams,
    ) -> bool {
        if proposed.share_size > self.capacity {
            return false;
        }
        if peer_reputation.as_rational() >= &self.threshold {
            return true;
        }
        self.newcomer_grace && peer_transactions == 0
    }
}

/// Everything a session needs from its host node for one transition.
pub struct SessionCtx<'a> {
    pub tick: Tick,
    pub sec: &'a mut SecurityCtx,
    pub directory: &'a dyn DirectoryView,
    pub policy: &'a dyn AcceptPolicy,
    pub my_key: PrivateKeyHandle,
    pub my_authority: ServerId,
    /// The params this node offers back when it accepts as responder.
    pub counter_params: TradeParams,
    /// Negative-control knob: when false, the message 10/11 hash comparison
    /// is skipped (signature checks still run).
    pub check_transcript: bool,
}

/// What a transition asks the host to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEffect {
    Send { to: ServerId, message: Message },
    Bound { txn: TransactionId },
    Aborted { reason: AbortReason },
}

/// One side of one contract negotiation.
#[derive(Debug, Clone)]
pub struct ContractSession {
    pub role: Role,
    pub state: SessionState,
    pub me: ServerId,
    pub peer: ServerId,
    /// Params this node put on the table (initiator: proposal; responder:
    /// counter, set when 5b is sent).
    pub my_params: Option<TradeParams>,
    /// Params the peer put on the table.
    pub peer_params: Option<TradeParams>,
    /// This node's contract nonce (initiator: in message 1; responder: in 5b).
    pub my_nonce: Option<Nonce>,
    /// The peer's contract nonce.
    pub peer_nonce: Option<Nonce>,
    /// Canonical bytes of messages 1, 5, 9 (and 10 once seen/sent locally),
    /// append-only.
    transcript: Vec<Vec<u8>>,
    /// Set while a reputation query is outstanding.
    outstanding_query: Option<Nonce>,
    pub txn: Option<TransactionId>,
    pub started_at: Tick,
    pub last_activity: Tick,
}

impl ContractSession {
    /// Starts a negotiation as initiator; emits message 1.
    pub fn initiate(
        me: ServerId,
        peer: ServerId,
        params: TradeParams,
        ctx: &mut SessionCtx<'_>,
    ) -> (Self, Vec<SessionEffect>) {
        let nonce = ctx.sec.fresh_nonce(&me);
        let propose = Message::ContractPropose {
            from: me.clone(),
            share_size: params.share_size,
            duration: params.duration,
            to: peer.clone(),
            nonce,
        };
        let mut session = ContractSession {
            role: Role::Initiator,
            state: SessionState::Sent1,
            me,
            peer: peer.clone(),
            my_params: Some(params),
            peer_params: None,
            my_nonce: Some(nonce),
            peer_nonce: None,
            transcript: vec![propose.encode()],
            outstanding_query: None,
            txn: None,
            started_at: ctx.tick,
            last_activity: ctx.tick,
        };
        session.last_activity = ctx.tick;
        (
            session,
            vec![SessionEffect::Send {
                to: peer,
                message: propose,
            }],
        )
    }

    /// Starts a responder session from a received message 1 (raw bytes enter
    /// the transcript) and queries the initiator's reputation.
    pub fn respond(
        me: ServerId,
        propose: &Message,
        raw: &[u8],
        ctx: &mut SessionCtx<'_>,
    ) -> Option<(Self, Vec<SessionEffect>)> {
        let Message::ContractPropose {
            from,
            share_size,
            duration,
            to,
            nonce,
        } = propose
        else {
            return None;
        };
        if *to != me {
            return None;
        }
        let peer_params = TradeParams {
            share_size: *share_size,
            duration: *duration,
        };
        let query_nonce = ctx.sec.fresh_nonce(&me);
        let query = Message::RepQuery {
            from: me.clone(),
            about: from.clone(),
            nonce: query_nonce,
        };
        let session = ContractSession {
            role: Role::Responder,
            state: SessionState::AwaitRep,
            me,
            peer: from.clone(),
            my_params: None,
            peer_params: Some(peer_params),
            my_nonce: None,
            peer_nonce: Some(*nonce),
            transcript: vec![raw.to_vec()],
            outstanding_query: Some(query_nonce),
            txn: None,
            started_at: ctx.tick,
            last_activity: ctx.tick,
        };
        let to_auth = session.my_authority_effect(ctx, query);
        Some((session, vec![to_auth]))
    }

    fn my_authority_effect(&self, ctx: &SessionCtx<'_>, message: Message) -> SessionEffect {
        SessionEffect::Send {
            to: ctx.my_authority.clone(),
            message,
        }
    }

    fn abort(&mut self, reason: AbortReason) -> Vec<SessionEffect> {
        self.state = SessionState::Aborted(reason);
        vec![SessionEffect::Aborted { reason }]
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, SessionState::Done | SessionState::Aborted(_))
    }

    /// Canonical transcript bytes accumulated so far.
    pub fn transcript(&self) -> &[Vec<u8>] {
        &self.transcript
    }

    fn transcript_digest(&self, upto: usize) -> message_security::Hash {
        let mut all = Vec::new();
        for part in self.transcript.iter().take(upto) {
            all.extend_from_slice(part);
        }
        digest(&all)
    }

    /// Fires an inactivity timeout if the session has been waiting longer
    /// than `timeout` ticks.
    pub fn on_timeout_check(&mut self, tick: Tick, timeout: Tick) -> Option<SessionEffect> {
        if self.is_terminal() || tick < self.last_activity.saturating_add(timeout) {
            return None;
        }
        self.state = SessionState::Aborted(AbortReason::Timeout);
        Some(SessionEffect::Aborted {
            reason: AbortReason::Timeout,
        })
    }

    /// Advances the session with an incoming message. `raw` must be the
    /// exact bytes received, since they may enter the transcript.
    pub fn on_message(
        &mut self,
        message: &Message,
        raw: &[u8],
        ctx: &mut SessionCtx<'_>,
    ) -> Vec<SessionEffect> {
        if self.is_terminal() {
            return Vec::new();
        }
        self.last_activity = ctx.tick;
        match (self.role, self.state, message) {
            // 5a: the responder rejected our proposal.
            (Role::Initiator, SessionState::Sent1, Message::ContractReject { from, ack_nonce }) => {
                if *from != self.peer {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                if Some(ack_nonce.0) != self.my_nonce.map(|n| n.succ().0) {
                    return self.abort(AbortReason::StaleOrReplay);
                }
                self.abort(AbortReason::PeerRejected)
            }
            // 5b: counter-offer; query my authority about the peer.
            (
                Role::Initiator,
                SessionState::Sent1,
                Message::ContractCounter {
                    from,
                    share_size,
                    duration,
                    to,
                    nonce,
                },
            ) => {
                if *from != self.peer || *to != self.me {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                self.peer_params = Some(TradeParams {
                    share_size: *share_size,
                    duration: *duration,
                });
                self.peer_nonce = Some(*nonce);
                self.transcript.push(raw.to_vec());
                let query_nonce = ctx.sec.fresh_nonce(&self.me);
                self.outstanding_query = Some(query_nonce);
                self.state = SessionState::AwaitRep;
                let query = Message::RepQuery {
                    from: self.me.clone(),
                    about: self.peer.clone(),
                    nonce: query_nonce,
                };
                vec![self.my_authority_effect(ctx, query)]
            }
            // 4/8: reputation attestation about the peer.
            (
                _,
                SessionState::AwaitRep,
                Message::RepAttest {
                    from_authority,
                    subject,
                    transactions,
                    reputation,
                    sig,
                },
            ) => {
                if self.outstanding_query.is_none() || *subject != self.peer {
                    return self.abort(AbortReason::BadAuthorityAttestation);
                }
                // The attestation must come from the peer's authority of
                // record and verify under that authority's key.
                let expected = match ctx.directory.authority_of(&self.peer) {
                    Some(a) => a,
                    None => return self.abort(AbortReason::BadAuthorityAttestation),
                };
                let auth_key = match ctx.directory.public_key_of(&expected) {
                    Some(k) => k,
                    None => return self.abort(AbortReason::BadAuthorityAttestation),
                };
                let payload = rep_attest_sign_payload(from_authority, subject, *transactions, reputation);
                if *from_authority != expected || !ctx.sec.verify(&payload, sig, &auth_key) {
                    return self.abort(AbortReason::BadAuthorityAttestation);
                }
                self.outstanding_query = None;
                let peer_gr = match GlobalReputation::from_rational(reputation.clone()) {
                    Ok(gr) => gr,
                    Err(_) => return self.abort(AbortReason::BadAuthorityAttestation),
                };
                let proposed = self
                    .peer_params
                    .expect("peer params are recorded before the reputation query");
                let accept = ctx
                    .policy
                    .accept(&self.peer, &peer_gr, *transactions, &proposed);
                match self.role {
                    Role::Responder => {
                        if !accept {
                            // 5a carries the initiator's nonce + 1.
                            let reject = Message::ContractReject {
                                from: self.me.clone(),
                                ack_nonce: self.peer_nonce.expect("set by message 1").succ(),
                            };
                            let mut effects = vec![SessionEffect::Send {
                                to: self.peer.clone(),
                                message: reject,
                            }];
                            effects.extend(self.abort(AbortReason::PolicyRejected));
                            return effects;
                        }
                        let my_nonce = ctx.sec.fresh_nonce(&self.me);
                        self.my_nonce = Some(my_nonce);
                        self.my_params = Some(ctx.counter_params);
                        let counter = Message::ContractCounter {
                            from: self.me.clone(),
                            share_size: ctx.counter_params.share_size,
                            duration: ctx.counter_params.duration,
                            to: self.peer.clone(),
                            nonce: my_nonce,
                        };
                        self.transcript.push(counter.encode());
                        self.state = SessionState::Sent5;
                        vec![SessionEffect::Send {
                            to: self.peer.clone(),
                            message: counter,
                        }]
                    }
                    Role::Initiator => {
                        let responder_nonce = self.peer_nonce.expect("set by message 5b");
                        if !accept {
                            let reject = Message::ContractReject {
                                from: self.me.clone(),
                                ack_nonce: responder_nonce.succ(),
                            };
                            let mut effects = vec![SessionEffect::Send {
                                to: self.peer.clone(),
                                message: reject,
                            }];
                            effects.extend(self.abort(AbortReason::PolicyRejected));
                            return effects;
                        }
                        let ack = Message::ContractAck {
                            from: self.me.clone(),
                            ack_nonce: responder_nonce.succ(),
                        };
                        self.transcript.push(ack.encode());
                        // Message 10: sign the hash of messages 1, 5, 9.
                        let hash = self.transcript_digest(3);
                        let payload = binding_sign_payload(TAG_BINDING_HASH, &self.me, &hash);
                        let sig = ctx
                            .sec
                            .sign(&self.me, &ctx.my_key, &payload)
                            .expect("a node holds its own key");
                        let binding = Message::BindingHash {
                            from: self.me.clone(),
                            hash,
                            sig,
                        };
                        self.transcript.push(binding.encode());
                        self.state = SessionState::Sent9;
                        vec![
                            SessionEffect::Send {
                                to: self.peer.clone(),
                                message: ack,
                            },
                            SessionEffect::Send {
                                to: self.peer.clone(),
                                message: binding,
                            },
                        ]
                    }
                }
            }
            // 9a: the initiator rejected our counter.
            (Role::Responder, SessionState::Sent5, Message::ContractReject { from, ack_nonce }) => {
                if *from != self.peer {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                if Some(ack_nonce.0) != self.my_nonce.map(|n| n.succ().0) {
                    return self.abort(AbortReason::StaleOrReplay);
                }
                self.abort(AbortReason::PeerRejected)
            }
            // 9b: ack of our counter; start awaiting the binding hash.
            (Role::Responder, SessionState::Sent5, Message::ContractAck { from, ack_nonce }) => {
                if *from != self.peer {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                if Some(ack_nonce.0) != self.my_nonce.map(|n| n.succ().0) {
                    return self.abort(AbortReason::StaleOrReplay);
                }
                self.transcript.push(raw.to_vec());
                self.state = SessionState::AwaitHash;
                Vec::new()
            }
            // 10: verify, always answer a validly signed hash with message
            // 11 over our own transcript, then settle our own verdict.
            (Role::Responder, SessionState::AwaitHash, Message::BindingHash { from, hash, sig }) => {
                if *from != self.peer {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                let peer_key = match ctx.directory.public_key_of(&self.peer) {
                    Some(k) => k,
                    None => return self.abort(AbortReason::ForgedBinding),
                };
                let payload = binding_sign_payload(TAG_BINDING_HASH, from, hash);
                if !ctx.sec.verify(&payload, sig, &peer_key) {
                    return self.abort(AbortReason::ForgedBinding);
                }
                let own_hash = self.transcript_digest(3);
                self.transcript.push(raw.to_vec());
                let ack_hash = self.transcript_digest(4);
                let ack_payload = binding_sign_payload(TAG_BINDING_HASH_ACK, &self.me, &ack_hash);
                let ack_sig = ctx
                    .sec
                    .sign(&self.me, &ctx.my_key, &ack_payload)
                    .expect("a node holds its own key");
                let ack = Message::BindingHashAck {
                    from: self.me.clone(),
                    hash: ack_hash,
                    sig: ack_sig,
                };
                let mut effects = vec![SessionEffect::Send {
                    to: self.peer.clone(),
                    message: ack,
                }];
                if *hash == own_hash || !ctx.check_transcript {
                    let txn = TransactionId {
                        initiator_nonce: self.peer_nonce.expect("set by message 1"),
                        responder_nonce: self.my_nonce.expect("set when 5b was sent"),
                    };
                    self.txn = Some(txn);
                    self.state = SessionState::Done;
                    effects.push(SessionEffect::Bound { txn });
                } else {
                    effects.extend(self.abort(AbortReason::TranscriptMismatch));
                }
                effects
            }
            // 11: final check on the initiator side.
            (Role::Initiator, SessionState::Sent9, Message::BindingHashAck { from, hash, sig }) => {
                if *from != self.peer {
                    return self.abort(AbortReason::ProtocolViolation);
                }
                let peer_key = match ctx.directory.public_key_of(&self.peer) {
                    Some(k) => k,
                    None => return self.abort(AbortReason::ForgedBinding),
                };
                let payload = binding_sign_payload(TAG_BINDING_HASH_ACK, from, hash);
                if !ctx.sec.verify(&payload, sig, &peer_key) {
                    return self.abort(AbortReason::ForgedBinding);
                }
                let expected = self.transcript_digest(4);
                if *hash == expected || !ctx.check_transcript {
                    let txn = TransactionId {
                        initiator_nonce: self.my_nonce.expect("set at initiate"),
                        responder_nonce: self.peer_nonce.expect("set by message 5b"),
                    };
                    self.txn = Some(txn);
                    self.state = SessionState::Done;
                    vec![SessionEffect::Bound { txn }]
                } else {
                    self.abort(AbortReason::TranscriptMismatch)
                }
            }
            // Any other message type in the current state is illegal.
            _ => self.abort(AbortReason::ProtocolViolation),
        }
    }
}

/// Bytes covered by a reputation attestation signature (messages 4/8).
pub fn rep_attest_sign_payload(
    from_authority: &ServerId,
    subject: &ServerId,
    transactions: u64,
    reputation: &Rational,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_REP_ATTEST, |w| {
        w.server_id(from_authority)
            .server_id(subject)
            .u64(transactions)
            .rational(reputation)
    })
}

/// Bytes covered by a relay signature (messages 3/7).
pub fn rep_relay_sign_payload(
    from_authority: &ServerId,
    requester: &ServerId,
    about: &ServerId,
    nonce: Nonce,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_REP_RELAY, |w| {
        w.server_id(from_authority)
            .server_id(requester)
            .server_id(about)
            .nonce(nonce)
    })
}

/// Bytes covered by a binding-hash signature (messages 10/11).
pub fn binding_sign_payload(tag: u8, from: &ServerId, hash: &message_security::Hash) -> Vec<u8> {
    sign_payload(tag, |w| w.server_id(from).hash(hash))
}
