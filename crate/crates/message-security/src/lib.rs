//! Deterministic, test-grade model of the cryptographic envelopes used by
//! every protocol message: signatures, symmetric and public-key sealing,
//! digests, and nonces.
//!
//! Instead of real key material, a [`SecurityCtx`] keeps a registry of which
//! simulated node holds which key. A `sign` or `seal` call by a node that
//! does not hold the key fails with [`SecurityError::KeyNotHeld`] — that is
//! how forgery attempts surface in adversary scripts. Verification accepts a
//! signature only if the matching `sign` call was actually made, so a
//! hand-crafted [`Signature`] value never verifies.
//!
//! Digests are real SHA-256. Everything is deterministic under a fixed
//! scenario seed: nonces come from per-node seeded streams and key ids are
//! derived by hashing their seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use reputation_core::ServerId;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Identifies the public half of a key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKeyId(pub u64);

/// Opaque handle to a private key. Usable only by the registered holder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrivateKeyHandle(pub u64);

/// Identifies a symmetric key (e.g. a database subtree key).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymmetricKeyId(pub u64);

impl fmt::Display for PublicKeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pk:{:016x}", self.0)
    }
}

impl fmt::Display for SymmetricKeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k:{:016x}", self.0)
    }
}

/// A key pair bound to its owning node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKeyId,
    pub private: PrivateKeyHandle,
    pub owner: ServerId,
}

/// SHA-256 digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hash(pub [u8; 32]);

impl Hash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 16 hex chars, for compact event payloads.
    pub fn short_hex(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

impl fmt::Display for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A signature binding a signer's public key to the digest of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub signer: PublicKeyId,
    pub digest_of: Hash,
}

/// Bytes sealed under a symmetric key. Only a holder of the same key can
/// open it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBox {
    pub key: SymmetricKeyId,
    pub payload: Vec<u8>,
}

/// Bytes sealed to a node's public key. Anyone can seal; only the holder of
/// the matching private key can open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PubSealedBox {
    pub to: PublicKeyId,
    pub payload: Vec<u8>,
}

/// 128-bit nonce drawn from a node's seeded stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nonce(pub u128);

impl Nonce {
    /// The `N + 1` acknowledgment value.
    pub fn succ(self) -> Nonce {
        Nonce(self.0.wrapping_add(1))
    }

    pub fn to_be_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// A transaction is named by the two parties' contract nonces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransactionId {
    pub initiator_nonce: Nonce,
    pub responder_nonce: Nonce,
}

impl TransactionId {
    /// Canonical byte form: initiator nonce followed by responder nonce.
    pub fn encode(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[..16].copy_from_slice(&self.initiator_nonce.to_be_bytes());
        out[16..].copy_from_slice(&self.responder_nonce.to_be_bytes());
        out
    }
}

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.initiator_nonce, self.responder_nonce)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SecurityError {
    #[error("{actor} does not hold the key")]
    KeyNotHeld { actor: ServerId },
    #[error("unsealing failed: presented key does not match")]
    UnsealingFailed,
    #[error("unknown key")]
    UnknownKey,
}

/// SHA-256 of a byte sequence.
pub fn digest(message: &[u8]) -> Hash {
    let mut hasher = Sha256::new();
    hasher.update(message);
    Hash(hasher.finalize().into())
}

fn derive_u64(label: &str, material: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update(material);
    let out: [u8; 32] = hasher.finalize().into();
    u64::from_be_bytes(out[..8].try_into().unwrap())
}

fn derive_seed(label: &str, scenario_seed: u64, material: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update(scenario_seed.to_be_bytes());
    hasher.update(material);
    hasher.finalize().into()
}

/// Key registry plus nonce streams for one simulation run.
///
/// Confined to the single simulation thread; all the value types it hands
/// out are freely transferable.
#[derive(Debug)]
pub struct SecurityCtx {
    scenario_seed: u64,
    private_holder: BTreeMap<PrivateKeyHandle, ServerId>,
    private_to_public: BTreeMap<PrivateKeyHandle, PublicKeyId>,
    public_to_private: BTreeMap<PublicKeyId, PrivateKeyHandle>,
    sym_holders: BTreeMap<SymmetricKeyId, BTreeSet<ServerId>>,
    minted: BTreeSet<(PublicKeyId, Hash)>,
    nonce_streams: BTreeMap<ServerId, ChaCha20Rng>,
    emitted_nonces: BTreeMap<ServerId, BTreeSet<u128>>,
    sym_counter: u64,
}

impl SecurityCtx {
    pub fn new(scenario_seed: u64) -> Self {
        Self {
            scenario_seed,
            private_holder: BTreeMap::new(),
            private_to_public: BTreeMap::new(),
            public_to_private: BTreeMap::new(),
            sym_holders: BTreeMap::new(),
            minted: BTreeSet::new(),
            nonce_streams: BTreeMap::new(),
            emitted_nonces: BTreeMap::new(),
            sym_counter: 0,
        }
    }

    /// Deterministic key pair for a seed; registers the owner as the only
    /// node able to sign with it.
    pub fn keygen(&mut self, owner: &ServerId, key_seed: u64) -> KeyPair {
        let public = PublicKeyId(derive_u64("servnet:pk", &key_seed.to_be_bytes()));
        let private = PrivateKeyHandle(derive_u64("servnet:sk", &key_seed.to_be_bytes()));
        self.private_holder.insert(private, owner.clone());
        self.private_to_public.insert(private, public);
        self.public_to_private.insert(public, private);
        KeyPair {
            public,
            private,
            owner: owner.clone(),
        }
    }

    /// Signs `message` as `actor`. Fails unless `actor` is the registered
    /// holder of the private key.
    pub fn sign(
        &mut self,
        actor: &ServerId,
        key: &PrivateKeyHandle,
        message: &[u8],
    ) -> Result<Signature, SecurityError> {
        match self.private_holder.get(key) {
            None => Err(SecurityError::UnknownKey),
            Some(holder) if holder != actor => Err(SecurityError::KeyNotHeld {
                actor: actor.clone(),
            }),
            Some(_) => {
                let signer = *self
                    .private_to_public
                    .get(key)
                    .expect("registered private key has a public half");
                let digest_of = digest(message);
                self.minted.insert((signer, digest_of));
                Ok(Signature { signer, digest_of })
            }
        }
    }

    /// True iff `sig` was produced by the holder of `key` over exactly these
    /// bytes. Never errors; mismatches and fabricated signatures are `false`.
    pub fn verify(&self, message: &[u8], sig: &Signature, key: &PublicKeyId) -> bool {
        sig.signer == *key
            && sig.digest_of == digest(message)
            && self.minted.contains(&(sig.signer, sig.digest_of))
    }

    /// Mints a fresh symmetric key held by the given nodes.
    pub fn mint_symmetric_key(&mut self, holders: &[ServerId]) -> SymmetricKeyId {
        let id = SymmetricKeyId(derive_u64(
            "servnet:symk",
            &[
                self.scenario_seed.to_be_bytes(),
                self.sym_counter.to_be_bytes(),
            ]
            .concat(),
        ));
        self.sym_counter += 1;
        self.sym_holders
            .insert(id, holders.iter().cloned().collect());
        id
    }

    pub fn grant_symmetric(&mut self, key: SymmetricKeyId, holder: &ServerId) {
        self.sym_holders
            .entry(key)
            .or_default()
            .insert(holder.clone());
    }

    pub fn holds_symmetric(&self, key: &SymmetricKeyId, node: &ServerId) -> bool {
        self.sym_holders
            .get(key)
            .is_some_and(|holders| holders.contains(node))
    }

    /// Seals bytes under a symmetric key the actor holds.
    pub fn seal(
        &self,
        actor: &ServerId,
        key: &SymmetricKeyId,
        payload: &[u8],
    ) -> Result<SealedBox, SecurityError> {
        if !self.holds_symmetric(key, actor) {
            return Err(SecurityError::KeyNotHeld {
                actor: actor.clone(),
            });
        }
        Ok(SealedBox {
            key: *key,
            payload: payload.to_vec(),
        })
    }

    /// Opens a sealed box with the presented key. Fails if the box was sealed
    /// under a different key or the actor does not hold the presented one.
    pub fn open(
        &self,
        actor: &ServerId,
        sealed: &SealedBox,
        key: &SymmetricKeyId,
    ) -> Result<Vec<u8>, SecurityError> {
        if sealed.key != *key {
            return Err(SecurityError::UnsealingFailed);
        }
        if !self.holds_symmetric(key, actor) {
            return Err(SecurityError::KeyNotHeld {
                actor: actor.clone(),
            });
        }
        Ok(sealed.payload.clone())
    }

    /// Seals bytes to a node's public key. No possession required to seal.
    pub fn seal_to_public(&self, to: &PublicKeyId, payload: &[u8]) -> PubSealedBox {
        PubSealedBox {
            to: *to,
            payload: payload.to_vec(),
        }
    }

    /// Opens a public-key box; only the holder of the matching private key
    /// succeeds.
    pub fn open_public(
        &self,
        actor: &ServerId,
        sealed: &PubSealedBox,
    ) -> Result<Vec<u8>, SecurityError> {
        let private = self
            .public_to_private
            .get(&sealed.to)
            .ok_or(SecurityError::UnknownKey)?;
        match self.private_holder.get(private) {
            Some(holder) if holder == actor => Ok(sealed.payload.clone()),
            Some(_) => Err(SecurityError::KeyNotHeld {
                actor: actor.clone(),
            }),
            None => Err(SecurityError::UnknownKey),
        }
    }

    /// Next nonce from the node's seeded stream. Never repeats within a run.
    pub fn fresh_nonce(&mut self, node: &ServerId) -> Nonce {
        let scenario_seed = self.scenario_seed;
        let stream = self.nonce_streams.entry(node.clone()).or_insert_with(|| {
            ChaCha20Rng::from_seed(derive_seed(
                "servnet:nonce",
                scenario_seed,
                node.as_str().as_bytes(),
            ))
        });
        let emitted = self.emitted_nonces.entry(node.clone()).or_default();
        loop {
            let value = ((stream.next_u64() as u128) << 64) | stream.next_u64() as u128;
            if emitted.insert(value) {
                return Nonce(value);
            }
        }
    }

    /// Deterministic per-run RNG stream for a labelled purpose (e.g. the
    /// initial authority draw).
    pub fn derived_rng(&self, label: &str) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(derive_seed(
            "servnet:rng",
            self.scenario_seed,
            label.as_bytes(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> ServerId {
        ServerId::new(s)
    }

    #[test]
    fn keygen_is_deterministic_and_distinct() {
        let mut ctx = SecurityCtx::new(7);
        let a1 = ctx.keygen(&sid("a"), 1);
        let a2 = ctx.keygen(&sid("a"), 1);
        assert_eq!(a1, a2);
        let b = ctx.keygen(&sid("b"), 2);
        assert_ne!(a1.public, b.public);
        assert_ne!(a1.private, b.private);
    }

    #[test]
    fn sign_verify_round_trip() {
        let mut ctx = SecurityCtx::new(7);
        let kp = ctx.keygen(&sid("a"), 1);
        let sig = ctx.sign(&sid("a"), &kp.private, b"hello").unwrap();
        assert!(ctx.verify(b"hello", &sig, &kp.public));
    }

    #[test]
    fn sign_with_unheld_key_is_rejected() {
        let mut ctx = SecurityCtx::new(7);
        let victim = ctx.keygen(&sid("victim"), 1);
        let err = ctx
            .sign(&sid("adversary"), &victim.private, b"m")
            .unwrap_err();
        assert!(matches!(err, SecurityError::KeyNotHeld { .. }));
    }

    #[test]
    fn verify_rejects_wrong_key_and_tampered_bytes() {
        let mut ctx = SecurityCtx::new(7);
        let a = ctx.keygen(&sid("a"), 1);
        let b = ctx.keygen(&sid("b"), 2);
        let sig = ctx.sign(&sid("a"), &a.private, b"m1").unwrap();
        assert!(!ctx.verify(b"m1", &sig, &b.public));
        assert!(!ctx.verify(b"m2", &sig, &a.public));
        let mut flipped = b"m1".to_vec();
        flipped[0] ^= 1;
        assert!(!ctx.verify(&flipped, &sig, &a.public));
    }

    #[test]
    fn fabricated_signature_never_verifies() {
        let mut ctx = SecurityCtx::new(7);
        let a = ctx.keygen(&sid("a"), 1);
        // An adversary that crafts the right-looking value without a sign
        // call still fails: the signature was never minted.
        let forged = Signature {
            signer: a.public,
            digest_of: digest(b"payload"),
        };
        assert!(!ctx.verify(b"payload", &forged, &a.public));
    }

    #[test]
    fn symmetric_seal_round_trip_and_lockout() {
        let mut ctx = SecurityCtx::new(7);
        let k1 = ctx.mint_symmetric_key(&[sid("db"), sid("auth")]);
        let k2 = ctx.mint_symmetric_key(&[sid("db")]);
        let sealed = ctx.seal(&sid("auth"), &k1, b"record").unwrap();
        assert_eq!(ctx.open(&sid("db"), &sealed, &k1).unwrap(), b"record");
        // Rotated-out key: presenting k2 against a k1 box fails.
        assert_eq!(
            ctx.open(&sid("db"), &sealed, &k2).unwrap_err(),
            SecurityError::UnsealingFailed
        );
        // Sealing requires possession.
        assert!(matches!(
            ctx.seal(&sid("peer"), &k1, b"x").unwrap_err(),
            SecurityError::KeyNotHeld { .. }
        ));
    }

    #[test]
    fn seal_is_deterministic() {
        let mut ctx = SecurityCtx::new(7);
        let k = ctx.mint_symmetric_key(&[sid("db")]);
        let a = ctx.seal(&sid("db"), &k, b"payload").unwrap();
        let b = ctx.seal(&sid("db"), &k, b"payload").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn public_sealing_only_opens_for_the_key_holder() {
        let mut ctx = SecurityCtx::new(7);
        let kp = ctx.keygen(&sid("a"), 1);
        let boxed = ctx.seal_to_public(&kp.public, b"ack");
        assert_eq!(ctx.open_public(&sid("a"), &boxed).unwrap(), b"ack");
        assert!(matches!(
            ctx.open_public(&sid("b"), &boxed).unwrap_err(),
            SecurityError::KeyNotHeld { .. }
        ));
    }

    #[test]
    fn digest_distinguishes_inputs() {
        assert_eq!(digest(b"x"), digest(b"x"));
        assert_ne!(digest(b"x"), digest(b"x\x00"));
    }

    #[test]
    fn nonces_are_fresh_and_seed_deterministic() {
        let mut ctx = SecurityCtx::new(7);
        let n1 = ctx.fresh_nonce(&sid("a"));
        let n2 = ctx.fresh_nonce(&sid("a"));
        assert_ne!(n1, n2);

        let mut ctx2 = SecurityCtx::new(7);
        assert_eq!(ctx2.fresh_nonce(&sid("a")), n1);
        assert_eq!(ctx2.fresh_nonce(&sid("a")), n2);

        let mut other_seed = SecurityCtx::new(8);
        assert_ne!(other_seed.fresh_nonce(&sid("a")), n1);
    }

    #[test]
    fn nonce_increment_is_plain_integer_succ() {
        let n = Nonce(41);
        assert_eq!(n.succ(), Nonce(42));
    }

    #[test]
    fn transaction_id_encodes_as_concatenation() {
        let txn = TransactionId {
            initiator_nonce: Nonce(1),
            responder_nonce: Nonce(2),
        };
        let bytes = txn.encode();
        assert_eq!(&bytes[..16], &1u128.to_be_bytes());
        assert_eq!(&bytes[16..], &2u128.to_be_bytes());
    }
}
