//! Registration: a newcomer introduces itself to a chosen authority with a
//! self-signed message, receives an `N + 1` acknowledgment sealed to its
//! public key, and the authority floods the counter-signed introduction to
//! every authority so all node-authority tables converge.
//!
//! The public-key-to-pseudonym binding is trust-on-first-use: the first
//! flood that names a pseudonym wins and later conflicting floods are
//! rejected as duplicates.

use message_security::{Nonce, PrivateKeyHandle, PublicKeyId, SecurityCtx, Signature};
use reputation_core::ServerId;

use crate::wire::{sign_payload, Message, TAG_REG_FLOOD, TAG_REG_INTRO};

/// Bytes covered by the newcomer's self-signature in message 1.
pub fn intro_sign_payload(newcomer: &ServerId, key: PublicKeyId, nonce: Nonce) -> Vec<u8> {
    sign_payload(TAG_REG_INTRO, |w| {
        w.server_id(newcomer).public_key(key).nonce(nonce)
    })
}

/// Bytes covered by the flooding authority's counter-signature in message 3.
pub fn flood_sign_payload(
    authority: &ServerId,
    newcomer: &ServerId,
    key: PublicKeyId,
    nonce: Nonce,
    intro_sig: &Signature,
) -> Vec<u8> {
    sign_payload(TAG_REG_FLOOD, |w| {
        w.server_id(authority)
            .server_id(newcomer)
            .public_key(key)
            .nonce(nonce)
            .signature(intro_sig)
    })
}

/// Message 1: the newcomer's self-signed introduction.
pub fn make_reg_intro(
    newcomer: &ServerId,
    public_key: PublicKeyId,
    private_key: &PrivateKeyHandle,
    sec: &mut SecurityCtx,
) -> Message {
    let nonce = sec.fresh_nonce(newcomer);
    let payload = intro_sign_payload(newcomer, public_key, nonce);
    let sig = sec
        .sign(newcomer, private_key, &payload)
        .expect("a node holds its own key");
    Message::RegIntro {
        newcomer: newcomer.clone(),
        public_key,
        nonce,
        sig,
    }
}

/// Checks the self-signature of message 1 against the key it carries.
pub fn verify_reg_intro(
    newcomer: &ServerId,
    public_key: PublicKeyId,
    nonce: Nonce,
    sig: &Signature,
    sec: &SecurityCtx,
) -> bool {
    let payload = intro_sign_payload(newcomer, public_key, nonce);
    sec.verify(&payload, sig, &public_key)
}

/// Message 2: `N + 1` sealed to the newcomer's public key.
pub fn make_reg_ack(newcomer_key: PublicKeyId, nonce: Nonce, sec: &SecurityCtx) -> Message {
    let boxed = sec.seal_to_public(&newcomer_key, &nonce.succ().to_be_bytes());
    Message::RegAck { boxed }
}

/// Opens message 2 at the newcomer and returns the acknowledged value.
pub fn open_reg_ack(
    newcomer: &ServerId,
    message: &Message,
    sec: &SecurityCtx,
) -> Option<Nonce> {
    let Message::RegAck { boxed } = message else {
        return None;
    };
    let bytes = sec.open_public(newcomer, boxed).ok()?;
    let arr: [u8; 16] = bytes.try_into().ok()?;
    Some(Nonce(u128::from_be_bytes(arr)))
}

/// Message 3: the authority's counter-signed flood.
pub fn make_reg_flood(
    authority: &ServerId,
    authority_key: &PrivateKeyHandle,
    newcomer: &ServerId,
    public_key: PublicKeyId,
    nonce: Nonce,
    intro_sig: Signature,
    sec: &mut SecurityCtx,
) -> Message {
    let payload = flood_sign_payload(authority, newcomer, public_key, nonce, &intro_sig);
    let sig = sec
        .sign(authority, authority_key, &payload)
        .expect("an authority holds its own key");
    Message::RegFlood {
        authority: authority.clone(),
        newcomer: newcomer.clone(),
        public_key,
        nonce,
        intro_sig,
        sig,
    }
}

/// Checks a flood's counter-signature under the flooding authority's key.
#[allow(clippy::too_many_arguments)]
pub fn verify_reg_flood(
    authority: &ServerId,
    authority_key: PublicKeyId,
    newcomer: &ServerId,
    public_key: PublicKeyId,
    nonce: Nonce,
    intro_sig: &Signature,
    sig: &Signature,
    sec: &SecurityCtx,
) -> bool {
    let payload = flood_sign_payload(authority, newcomer, public_key, nonce, intro_sig);
    sec.verify(&payload, sig, &authority_key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intro_round_trip() {
        let mut sec = SecurityCtx::new(1);
        let s9 = ServerId::new("s9");
        let kp = sec.keygen(&s9, 9);
        let intro = make_reg_intro(&s9, kp.public, &kp.private, &mut sec);
        let Message::RegIntro {
            newcomer,
            public_key,
            nonce,
            sig,
        } = &intro
        else {
            panic!("expected intro");
        };
        assert!(verify_reg_intro(newcomer, *public_key, *nonce, sig, &sec));
    }

    #[test]
    fn ack_carries_nonce_plus_one_and_only_opens_for_newcomer() {
        let mut sec = SecurityCtx::new(1);
        let s9 = ServerId::new("s9");
        let kp = sec.keygen(&s9, 9);
        let ack = make_reg_ack(kp.public, Nonce(41), &sec);
        assert_eq!(open_reg_ack(&s9, &ack, &sec), Some(Nonce(42)));
        assert_eq!(open_reg_ack(&ServerId::new("other"), &ack, &sec), None);
    }

    #[test]
    fn flood_verifies_under_authority_key_only() {
        let mut sec = SecurityCtx::new(1);
        let s9 = ServerId::new("s9");
        let a1 = ServerId::new("a1");
        let s9_kp = sec.keygen(&s9, 9);
        let a1_kp = sec.keygen(&a1, 1);
        let intro = make_reg_intro(&s9, s9_kp.public, &s9_kp.private, &mut sec);
        let Message::RegIntro {
            nonce, sig: intro_sig, ..
        } = intro
        else {
            panic!("expected intro");
        };
        let flood = make_reg_flood(&a1, &a1_kp.private, &s9, s9_kp.public, nonce, intro_sig, &mut sec);
        let Message::RegFlood {
            authority,
            newcomer,
            public_key,
            nonce,
            intro_sig,
            sig,
        } = &flood
        else {
            panic!("expected flood");
        };
        assert!(verify_reg_flood(
            authority, a1_kp.public, newcomer, *public_key, *nonce, intro_sig, sig, &sec
        ));
        assert!(!verify_reg_flood(
            authority, s9_kp.public, newcomer, *public_key, *nonce, intro_sig, sig, &sec
        ));
    }
}
