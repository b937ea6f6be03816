//! Authority change: the three-message key-rotation exchange with the
//! database server, plus the DB-signed change notice delivered verbatim to
//! every leaf of the affected subtree.
//!
//! Payload helpers here build and parse the sealed bodies; the exchange
//! itself is driven by the simulation's database-server node.

use message_security::{Nonce, SecurityCtx, Signature, SymmetricKeyId};
use reputation_core::ServerId;

use crate::wire::{sign_payload, FieldReader, FieldWriter, Message, TAG_CHANGE_NOTICE};

/// Sealed body of rotation message 1: `{new, old, nonce}` under the current
/// subtree key.
pub fn rotate_init_payload(new: &ServerId, old: &ServerId, nonce: Nonce) -> Vec<u8> {
    FieldWriter::default()
        .server_id(new)
        .server_id(old)
        .nonce(nonce)
        .finish()
}

pub fn parse_rotate_init(payload: &[u8]) -> Option<(ServerId, ServerId, Nonce)> {
    let mut r = FieldReader::new(payload);
    let new = r.server_id().ok()?;
    let old = r.server_id().ok()?;
    let nonce = r.nonce().ok()?;
    r.finish().ok()?;
    Some((new, old, nonce))
}

/// Bytes covered by the DB's signature inside the key grant: the new key,
/// the new authority, and the DB nonce.
pub fn key_grant_sign_payload(key: SymmetricKeyId, new: &ServerId, nonce: Nonce) -> Vec<u8> {
    FieldWriter::default()
        .field(&key.0.to_be_bytes())
        .server_id(new)
        .nonce(nonce)
        .finish()
}

/// Body sealed to the new authority in rotation message 2: the signed key
/// grant.
pub fn key_grant_payload(
    key: SymmetricKeyId,
    new: &ServerId,
    nonce: Nonce,
    sig: &Signature,
) -> Vec<u8> {
    FieldWriter::default()
        .field(&key.0.to_be_bytes())
        .server_id(new)
        .nonce(nonce)
        .signature(sig)
        .finish()
}

pub fn parse_key_grant(payload: &[u8]) -> Option<(SymmetricKeyId, ServerId, Nonce, Signature)> {
    let mut r = FieldReader::new(payload);
    let key_bytes = r.field().ok()?;
    let key_arr: [u8; 8] = key_bytes.try_into().ok()?;
    let key = SymmetricKeyId(u64::from_be_bytes(key_arr));
    let new = r.server_id().ok()?;
    let nonce = r.nonce().ok()?;
    let sig = r.signature().ok()?;
    r.finish().ok()?;
    Some((key, new, nonce, sig))
}

/// Bytes covered by the DB's signature on a change notice. The notice in
/// rotation message 2 and the standalone leaf notification sign the same
/// bytes, so the notice can be forwarded verbatim.
pub fn change_notice_sign_payload(
    db: &ServerId,
    new_authority: &ServerId,
    old_authority: &ServerId,
    nonce: Nonce,
) -> Vec<u8> {
    sign_payload(TAG_CHANGE_NOTICE, |w| {
        w.server_id(db)
            .server_id(new_authority)
            .server_id(old_authority)
            .nonce(nonce)
    })
}

/// Checks a change notice against the database server's public key.
pub fn verify_change_notice(
    db: &ServerId,
    new_authority: &ServerId,
    old_authority: &ServerId,
    nonce: Nonce,
    sig: &Signature,
    db_key: message_security::PublicKeyId,
    sec: &SecurityCtx,
) -> bool {
    let payload = change_notice_sign_payload(db, new_authority, old_authority, nonce);
    sec.verify(&payload, sig, &db_key)
}

/// Sealed body of rotation message 3: `N_DB + 1` under the new key.
pub fn rotate_confirm_payload(nonce: Nonce) -> Vec<u8> {
    nonce.succ().to_be_bytes().to_vec()
}

pub fn parse_rotate_confirm(payload: &[u8]) -> Option<Nonce> {
    let arr: [u8; 16] = payload.try_into().ok()?;
    Some(Nonce(u128::from_be_bytes(arr)))
}

/// Bytes covered by a revocation notice signature.
pub fn revoke_notice_sign_payload(
    authority: &ServerId,
    leaving: &ServerId,
    nonce: Nonce,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_REVOKE_NOTICE, |w| {
        w.server_id(authority).server_id(leaving).nonce(nonce)
    })
}

/// Builds the standalone leaf notification from grant fields.
pub fn make_change_notice(
    db: &ServerId,
    new_authority: &ServerId,
    old_authority: &ServerId,
    nonce: Nonce,
    sig: Signature,
) -> Message {
    Message::ChangeNotice {
        db: db.clone(),
        new_authority: new_authority.clone(),
        old_authority: old_authority.clone(),
        nonce,
        sig,
    }
}
