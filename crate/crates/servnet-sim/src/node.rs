//! Per-node simulation state: identity and keys, policy, contract sessions,
//! held shares, and — for authorities — the directory, working ledgers, and
//! feedback trackers.

use std::collections::{BTreeMap, BTreeSet};

use message_security::{KeyPair, Nonce, PublicKeyId, SymmetricKeyId, TransactionId};
use reputation_core::{Rational, ScoreLedger, ServerId};
use servnet_protocol::contract::ThresholdPolicy;
use servnet_protocol::feedback::{FeedbackDecision, FeedbackTracker};
use servnet_protocol::{AuthorityDirectory, ContractSession, TradeParams};

use crate::scenario::Honesty;

/// A share one node holds for another under a bound contract.
#[derive(Debug, Clone)]
pub struct HeldShare {
    pub owner: ServerId,
    pub size: u64,
    pub expiry: u64,
    pub txn: TransactionId,
}

/// What a node remembers about one of its bound contracts.
#[derive(Debug, Clone)]
pub struct BoundContract {
    pub peer: ServerId,
    pub my_params: TradeParams,
    pub peer_params: TradeParams,
    pub bind_tick: u64,
}

/// A feedback decision waiting for the scorer's weight attestation from
/// another authority.
#[derive(Debug, Clone)]
pub struct PendingApply {
    pub decision: FeedbackDecision,
    pub target: ServerId,
    pub expected_authority: ServerId,
    pub query_nonce: Nonce,
}

/// Authority-role state. Present only while the node is an authority.
#[derive(Debug, Default)]
pub struct AuthorityState {
    pub directory: AuthorityDirectory,
    /// Working ledgers for the subtree; every update is written through to
    /// the database over the sealed channel.
    pub ledgers: BTreeMap<ServerId, ScoreLedger>,
    pub subtree_key: Option<SymmetricKeyId>,
    pub trackers: BTreeMap<(TransactionId, ServerId), FeedbackTracker>,
    /// Reputation values frozen per (transaction, node) before that
    /// transaction's feedback touches the node's ledger.
    pub snapshots: BTreeMap<(TransactionId, ServerId), Rational>,
    pub pending_weight: BTreeMap<(TransactionId, ServerId), PendingApply>,
    pub seen_reg_nonces: BTreeMap<ServerId, BTreeSet<u128>>,
    pub rotation_pending: bool,
    /// Giver penalties already applied, when the optional hook is on.
    pub penalties_applied: BTreeSet<(TransactionId, ServerId)>,
}

/// One simulated server.
#[derive(Debug)]
pub struct Node {
    pub id: ServerId,
    pub keys: KeyPair,
    pub honesty: Honesty,
    pub policy: ThresholdPolicy,
    pub registered: bool,
    /// Authority of record as this node believes it (updated by change
    /// notices).
    pub my_authority: Option<ServerId>,
    pub authority: Option<AuthorityState>,
    pub initiator_sessions: Vec<ContractSession>,
    pub responder_sessions: Vec<ContractSession>,
    /// Replay cache: contract-proposal nonces seen per claimed sender.
    pub seen_contract_nonces: BTreeMap<ServerId, BTreeSet<u128>>,
    pub bound: BTreeMap<TransactionId, BoundContract>,
    pub feedback_sent: BTreeSet<TransactionId>,
    pub held_shares: Vec<HeldShare>,
    /// Counts expiry evaluations at this holder, for fail-every-nth.
    pub expiry_count: u64,
    /// Counter-offer params queued per expected initiator.
    pub pending_counter: BTreeMap<ServerId, Vec<TradeParams>>,
    /// Outstanding registration handshake nonce.
    pub reg_nonce: Option<Nonce>,
    pub reg_via: Option<ServerId>,
    /// The database server's public key, for verifying change notices.
    pub db_public_key: PublicKeyId,
}

impl Node {
    pub fn is_authority(&self) -> bool {
        self.authority.is_some()
    }

    /// The authority this node queries and routes through. An authority acts
    /// as its own authority of record.
    pub fn authority_of_record(&self) -> Option<ServerId> {
        if self.is_authority() {
            Some(self.id.clone())
        } else {
            self.my_authority.clone()
        }
    }
}
