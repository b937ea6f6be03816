//! The node-authority table every authority reconstructs from registration
//! floods, plus the lookup view the state machines use to resolve public
//! keys and authorities of record.

use std::collections::BTreeMap;

use message_security::PublicKeyId;
use reputation_core::ServerId;

/// Read-only resolution of a node's authority and public key.
///
/// Lookups are modeled as synchronous cache hits against an authority's
/// table; registration floods and change notices keep those tables
/// converged.
pub trait DirectoryView {
    fn authority_of(&self, node: &ServerId) -> Option<ServerId>;
    fn public_key_of(&self, node: &ServerId) -> Option<PublicKeyId>;
}

/// One authority's directory: node → authority plus node → public key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuthorityDirectory {
    node_to_authority: BTreeMap<ServerId, ServerId>,
    public_keys: BTreeMap<ServerId, PublicKeyId>,
}

impl AuthorityDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, node: &ServerId) -> bool {
        self.node_to_authority.contains_key(node)
    }

    pub fn insert(&mut self, node: ServerId, authority: ServerId, key: PublicKeyId) {
        self.node_to_authority.insert(node.clone(), authority);
        self.public_keys.insert(node, key);
    }

    /// Re-points a node at a new authority, keeping its key binding.
    pub fn set_authority(&mut self, node: &ServerId, authority: ServerId) {
        if let Some(slot) = self.node_to_authority.get_mut(node) {
            *slot = authority;
        }
    }

    pub fn remove(&mut self, node: &ServerId) {
        self.node_to_authority.remove(node);
        self.public_keys.remove(node);
    }

    pub fn len(&self) -> usize {
        self.node_to_authority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_to_authority.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ServerId, &ServerId)> {
        self.node_to_authority.iter()
    }

    /// Nodes currently attached to the given authority (including itself if
    /// self-attached).
    pub fn subtree_of(&self, authority: &ServerId) -> Vec<ServerId> {
        self.node_to_authority
            .iter()
            .filter(|(_, a)| *a == authority)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Authorities of record, i.e. every value appearing in the table.
    pub fn authorities(&self) -> Vec<ServerId> {
        let mut out: Vec<ServerId> = self.node_to_authority.values().cloned().collect();
        out.sort();
        out.dedup();
        out
    }

    /// Entries present in `self` but missing or different in `other`.
    pub fn diff(&self, other: &AuthorityDirectory) -> Vec<(ServerId, Option<ServerId>, Option<ServerId>)> {
        let mut out = Vec::new();
        for (node, auth) in &self.node_to_authority {
            let theirs = other.node_to_authority.get(node);
            if theirs != Some(auth) {
                out.push((node.clone(), Some(auth.clone()), theirs.cloned()));
            }
        }
        for (node, auth) in &other.node_to_authority {
            if !self.node_to_authority.contains_key(node) {
                out.push((node.clone(), None, Some(auth.clone())));
            }
        }
        out
    }
}

impl DirectoryView for AuthorityDirectory {
    fn authority_of(&self, node: &ServerId) -> Option<ServerId> {
        self.node_to_authority.get(node).cloned()
    }

    fn public_key_of(&self, node: &ServerId) -> Option<PublicKeyId> {
        self.public_keys.get(node).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_lookup_remove() {
        let mut dir = AuthorityDirectory::new();
        dir.insert(ServerId::new("s1"), ServerId::new("a1"), PublicKeyId(1));
        assert_eq!(dir.authority_of(&ServerId::new("s1")), Some(ServerId::new("a1")));
        assert_eq!(dir.public_key_of(&ServerId::new("s1")), Some(PublicKeyId(1)));
        dir.remove(&ServerId::new("s1"));
        assert!(dir.authority_of(&ServerId::new("s1")).is_none());
    }

    #[test]
    fn diff_reports_disagreements_both_ways() {
        let mut left = AuthorityDirectory::new();
        let mut right = AuthorityDirectory::new();
        left.insert(ServerId::new("s1"), ServerId::new("a1"), PublicKeyId(1));
        left.insert(ServerId::new("s2"), ServerId::new("a1"), PublicKeyId(2));
        right.insert(ServerId::new("s1"), ServerId::new("a2"), PublicKeyId(1));
        right.insert(ServerId::new("s3"), ServerId::new("a2"), PublicKeyId(3));
        let diff = left.diff(&right);
        assert_eq!(diff.len(), 3);
    }

    #[test]
    fn subtree_listing() {
        let mut dir = AuthorityDirectory::new();
        dir.insert(ServerId::new("a1"), ServerId::new("a1"), PublicKeyId(0));
        dir.insert(ServerId::new("s1"), ServerId::new("a1"), PublicKeyId(1));
        dir.insert(ServerId::new("s2"), ServerId::new("a2"), PublicKeyId(2));
        assert_eq!(
            dir.subtree_of(&ServerId::new("a1")),
            vec![ServerId::new("a1"), ServerId::new("s1")]
        );
        assert_eq!(dir.authorities(), vec![ServerId::new("a1"), ServerId::new("a2")]);
    }
}
