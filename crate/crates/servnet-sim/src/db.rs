//! The database server: one trusted simulated node holding the per-subtree
//! symmetric keys and every node's record. Authorities reach it only through
//! the sealed channel keyed by their current subtree key; a rotation revokes
//! the old key so the deposed authority's requests fail to unseal.

use std::collections::{BTreeMap, BTreeSet};

use message_security::{KeyPair, Nonce, SymmetricKeyId};
use reputation_core::ServerId;
use servnet_protocol::records::DbRecord;

/// A rotation that has been granted but not yet confirmed.
#[derive(Debug, Clone)]
pub struct PendingRotation {
    pub old: ServerId,
    pub new: ServerId,
    pub new_key: SymmetricKeyId,
    pub db_nonce: Nonce,
}

#[derive(Debug)]
pub struct DbServer {
    pub id: ServerId,
    pub keys: KeyPair,
    pub records: BTreeMap<ServerId, DbRecord>,
    /// Current sealed-channel key per authority.
    pub subtree_keys: BTreeMap<ServerId, SymmetricKeyId>,
    /// Keys revoked by completed rotations.
    pub revoked_keys: BTreeSet<SymmetricKeyId>,
    /// Keyed by the incoming (new) authority.
    pub pending_rotations: BTreeMap<ServerId, PendingRotation>,
}

impl DbServer {
    pub fn server_id() -> ServerId {
        ServerId::new("#db")
    }

    /// Why a sealed request from `from` cannot be served, if it cannot.
    pub fn denial_reason(&self, from: &ServerId, presented: SymmetricKeyId) -> Option<&'static str> {
        match self.subtree_keys.get(from) {
            Some(current) if *current == presented => None,
            Some(_) => {
                if self.revoked_keys.contains(&presented) {
                    Some("revoked-key")
                } else {
                    Some("wrong-key")
                }
            }
            None => {
                if self.revoked_keys.contains(&presented) {
                    Some("revoked-key")
                } else {
                    Some("not-an-authority")
                }
            }
        }
    }
}
