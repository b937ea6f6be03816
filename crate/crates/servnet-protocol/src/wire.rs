//! Canonical wire encoding for every protocol message.
//!
//! A message encodes as a 1-byte type tag followed by its fields in the
//! order listed in the catalog, each length-prefixed with a 4-byte
//! big-endian length. Signatures cover the same field encoding prefixed by
//! the message tag, so both peers hash identical bytes. The full table
//! lives in `docs/wire.md`.

use message_security::{
    Hash, Nonce, PubSealedBox, PublicKeyId, SealedBox, Signature, SymmetricKeyId, TransactionId,
};
use reputation_core::RationalInt as BigInt;
use reputation_core::{LocalScore, Rational, ServerId};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("field has unexpected length")]
    BadFieldLength,
    #[error("trailing bytes after message")]
    TrailingBytes,
    #[error("invalid utf-8 in identifier field")]
    BadIdentifier,
    #[error("invalid score byte {0:#04x}")]
    BadScore(u8),
    #[error("invalid rational field")]
    BadRational,
}

/// Every wire message in the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Registration 1: newcomer's self-signed introduction to its chosen
    /// authority.
    RegIntro {
        newcomer: ServerId,
        public_key: PublicKeyId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Registration 2: `N + 1` acknowledgment sealed to the newcomer's
    /// public key.
    RegAck { boxed: PubSealedBox },
    /// Registration 3: the chosen authority's counter-signed flood to every
    /// authority.
    RegFlood {
        authority: ServerId,
        newcomer: ServerId,
        public_key: PublicKeyId,
        nonce: Nonce,
        intro_sig: Signature,
        sig: Signature,
    },
    /// Contract 1: the initiator's proposal.
    ContractPropose {
        from: ServerId,
        share_size: u64,
        duration: u64,
        to: ServerId,
        nonce: Nonce,
    },
    /// Contract 2/6: a leaf asks its own authority for a peer's reputation.
    RepQuery {
        from: ServerId,
        about: ServerId,
        nonce: Nonce,
    },
    /// Contract 3/7: signed relay of a reputation query between authorities.
    RepRelay {
        from_authority: ServerId,
        requester: ServerId,
        about: ServerId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Contract 4/8: the subject's authority attests its reputation straight
    /// to the querying party.
    RepAttest {
        from_authority: ServerId,
        subject: ServerId,
        transactions: u64,
        reputation: Rational,
        sig: Signature,
    },
    /// Contract 5a/9a: rejection carrying the peer's nonce + 1.
    ContractReject { from: ServerId, ack_nonce: Nonce },
    /// Contract 5b: the responder's counter-proposal.
    ContractCounter {
        from: ServerId,
        share_size: u64,
        duration: u64,
        to: ServerId,
        nonce: Nonce,
    },
    /// Contract 9b: acknowledgment carrying the responder's nonce + 1.
    ContractAck { from: ServerId, ack_nonce: Nonce },
    /// Contract 10: signed hash of messages 1, 5, 9 as the sender saw them.
    BindingHash {
        from: ServerId,
        hash: Hash,
        sig: Signature,
    },
    /// Contract 11: signed hash of messages 1, 5, 9, 10.
    BindingHashAck {
        from: ServerId,
        hash: Hash,
        sig: Signature,
    },
    /// Feedback: the scorer's signed ±1 for one transaction. Identical bytes
    /// travel on both delivery paths. `target` is unsigned routing metadata
    /// naming the party the score concerns; the signature covers the
    /// transaction id, score, and scorer identity.
    Feedback {
        scorer: ServerId,
        target: ServerId,
        txn: TransactionId,
        score: LocalScore,
        sig: Signature,
    },
    /// Authority-to-authority query for a scorer's reputation snapshot used
    /// to weight a feedback.
    WeightQuery {
        from_authority: ServerId,
        scorer: ServerId,
        txn: TransactionId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Signed notice from a flagging authority to a cheating scorer's
    /// authority, used only when the optional giver penalty is enabled.
    CheatingReport {
        from_authority: ServerId,
        scorer: ServerId,
        txn: TransactionId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Signed response to a [`Message::WeightQuery`].
    WeightAttest {
        from_authority: ServerId,
        scorer: ServerId,
        txn: TransactionId,
        transactions: u64,
        reputation: Rational,
        ack_nonce: Nonce,
        sig: Signature,
    },
    /// Authority change 1: the old authority's sealed handover request.
    RotateInit { from: ServerId, boxed: SealedBox },
    /// Authority change 2: the database server grants the new key (sealed to
    /// the new authority) along with the signed change notice.
    RotateGrant {
        db: ServerId,
        key_box: PubSealedBox,
        new_authority: ServerId,
        old_authority: ServerId,
        notice_nonce: Nonce,
        notice_sig: Signature,
    },
    /// Authority change 3: the new authority proves possession of the new
    /// key by returning `N_DB + 1` sealed under it.
    RotateConfirm { from: ServerId, boxed: SealedBox },
    /// Leaf/authority notification of a committed authority change, signed
    /// by the database server.
    ChangeNotice {
        db: ServerId,
        new_authority: ServerId,
        old_authority: ServerId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Revocation notice flooded to all authorities.
    RevokeNotice {
        authority: ServerId,
        leaving: ServerId,
        nonce: Nonce,
        sig: Signature,
    },
    /// Sealed database write (full record) from an authority.
    DbWrite { from: ServerId, boxed: SealedBox },
    /// Sealed database read request from an authority.
    DbRead { from: ServerId, boxed: SealedBox },
    /// Sealed database read response.
    DbReadResult { from: ServerId, boxed: SealedBox },
}

pub const TAG_REG_INTRO: u8 = 0x01;
pub const TAG_REG_ACK: u8 = 0x02;
pub const TAG_REG_FLOOD: u8 = 0x03;
pub const TAG_CONTRACT_PROPOSE: u8 = 0x10;
pub const TAG_REP_QUERY: u8 = 0x11;
pub const TAG_REP_RELAY: u8 = 0x12;
pub const TAG_REP_ATTEST: u8 = 0x13;
pub const TAG_CONTRACT_REJECT: u8 = 0x14;
pub const TAG_CONTRACT_COUNTER: u8 = 0x15;
pub const TAG_CONTRACT_ACK: u8 = 0x16;
pub const TAG_BINDING_HASH: u8 = 0x17;
pub const TAG_BINDING_HASH_ACK: u8 = 0x18;
pub const TAG_FEEDBACK: u8 = 0x20;
pub const TAG_WEIGHT_QUERY: u8 = 0x21;
pub const TAG_WEIGHT_ATTEST: u8 = 0x22;
pub const TAG_CHEATING_REPORT: u8 = 0x23;
pub const TAG_ROTATE_INIT: u8 = 0x30;
pub const TAG_ROTATE_GRANT: u8 = 0x31;
pub const TAG_ROTATE_CONFIRM: u8 = 0x32;
pub const TAG_CHANGE_NOTICE: u8 = 0x33;
pub const TAG_REVOKE_NOTICE: u8 = 0x34;
pub const TAG_DB_WRITE: u8 = 0x40;
pub const TAG_DB_READ: u8 = 0x41;
pub const TAG_DB_READ_RESULT: u8 = 0x42;

/// Length-prefixed field writer used by every encoder.
#[derive(Default)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new(tag: u8) -> Self {
        Self { buf: vec![tag] }
    }

    pub fn field(mut self, bytes: &[u8]) -> Self {
        self.buf
            .extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn server_id(self, id: &ServerId) -> Self {
        self.field(id.as_str().as_bytes())
    }

    pub fn u64(self, value: u64) -> Self {
        self.field(&value.to_be_bytes())
    }

    pub fn nonce(self, nonce: Nonce) -> Self {
        self.field(&nonce.to_be_bytes())
    }

    pub fn hash(self, hash: &Hash) -> Self {
        self.field(&hash.0)
    }

    pub fn public_key(self, key: PublicKeyId) -> Self {
        self.field(&key.0.to_be_bytes())
    }

    pub fn signature(self, sig: &Signature) -> Self {
        let mut bytes = [0u8; 40];
        bytes[..8].copy_from_slice(&sig.signer.0.to_be_bytes());
        bytes[8..].copy_from_slice(&sig.digest_of.0);
        self.field(&bytes)
    }

    pub fn txn(self, txn: &TransactionId) -> Self {
        self.field(&txn.encode())
    }

    pub fn score(self, score: LocalScore) -> Self {
        let byte = match score {
            LocalScore::Positive => 0x01,
            LocalScore::Negative => 0xFF,
        };
        self.field(&[byte])
    }

    pub fn rational(self, value: &Rational) -> Self {
        self.field(format!("{}/{}", value.numer(), value.denom()).as_bytes())
    }

    pub fn sealed(self, boxed: &SealedBox) -> Self {
        let mut bytes = boxed.key.0.to_be_bytes().to_vec();
        bytes.extend_from_slice(&boxed.payload);
        self.field(&bytes)
    }

    pub fn pub_sealed(self, boxed: &PubSealedBox) -> Self {
        let mut bytes = boxed.to.0.to_be_bytes().to_vec();
        bytes.extend_from_slice(&boxed.payload);
        self.field(&bytes)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Reads length-prefixed fields back out of a message body.
pub struct FieldReader<'a> {
    bytes: &'a [u8],
}

impl<'a> FieldReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    pub fn field(&mut self) -> Result<&'a [u8], WireError> {
        if self.bytes.len() < 4 {
            return Err(WireError::Truncated);
        }
        let len = u32::from_be_bytes(self.bytes[..4].try_into().unwrap()) as usize;
        if self.bytes.len() < 4 + len {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.bytes[4..].split_at(len);
        self.bytes = rest;
        Ok(head)
    }

    pub fn server_id(&mut self) -> Result<ServerId, WireError> {
        let bytes = self.field()?;
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::BadIdentifier)?;
        Ok(ServerId::new(text))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let bytes = self.field()?;
        let arr: [u8; 8] = bytes.try_into().map_err(|_| WireError::BadFieldLength)?;
        Ok(u64::from_be_bytes(arr))
    }

    pub fn nonce(&mut self) -> Result<Nonce, WireError> {
        let bytes = self.field()?;
        let arr: [u8; 16] = bytes.try_into().map_err(|_| WireError::BadFieldLength)?;
        Ok(Nonce(u128::from_be_bytes(arr)))
    }

    pub fn hash(&mut self) -> Result<Hash, WireError> {
        let bytes = self.field()?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| WireError::BadFieldLength)?;
        Ok(Hash(arr))
    }

    pub fn public_key(&mut self) -> Result<PublicKeyId, WireError> {
        let bytes = self.field()?;
        let arr: [u8; 8] = bytes.try_into().map_err(|_| WireError::BadFieldLength)?;
        Ok(PublicKeyId(u64::from_be_bytes(arr)))
    }

    pub fn signature(&mut self) -> Result<Signature, WireError> {
        let bytes = self.field()?;
        if bytes.len() != 40 {
            return Err(WireError::BadFieldLength);
        }
        let signer = PublicKeyId(u64::from_be_bytes(bytes[..8].try_into().unwrap()));
        let digest_of = Hash(bytes[8..].try_into().unwrap());
        Ok(Signature { signer, digest_of })
    }

    pub fn txn(&mut self) -> Result<TransactionId, WireError> {
        let bytes = self.field()?;
        if bytes.len() != 32 {
            return Err(WireError::BadFieldLength);
        }
        let initiator = u128::from_be_bytes(bytes[..16].try_into().unwrap());
        let responder = u128::from_be_bytes(bytes[16..].try_into().unwrap());
        Ok(TransactionId {
            initiator_nonce: Nonce(initiator),
            responder_nonce: Nonce(responder),
        })
    }

    pub fn score(&mut self) -> Result<LocalScore, WireError> {
        let bytes = self.field()?;
        match bytes {
            [0x01] => Ok(LocalScore::Positive),
            [0xFF] => Ok(LocalScore::Negative),
            [other] => Err(WireError::BadScore(*other)),
            _ => Err(WireError::BadFieldLength),
        }
    }

    pub fn rational(&mut self) -> Result<Rational, WireError> {
        let bytes = self.field()?;
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::BadRational)?;
        let (n, d) = text.split_once('/').ok_or(WireError::BadRational)?;
        let numer: BigInt = n.parse().map_err(|_| WireError::BadRational)?;
        let denom: BigInt = d.parse().map_err(|_| WireError::BadRational)?;
        if denom == BigInt::from(0) {
            return Err(WireError::BadRational);
        }
        Ok(Rational::new(numer, denom))
    }

    pub fn sealed(&mut self) -> Result<SealedBox, WireError> {
        let bytes = self.field()?;
        if bytes.len() < 8 {
            return Err(WireError::BadFieldLength);
        }
        Ok(SealedBox {
            key: SymmetricKeyId(u64::from_be_bytes(bytes[..8].try_into().unwrap())),
            payload: bytes[8..].to_vec(),
        })
    }

    pub fn pub_sealed(&mut self) -> Result<PubSealedBox, WireError> {
        let bytes = self.field()?;
        if bytes.len() < 8 {
            return Err(WireError::BadFieldLength);
        }
        Ok(PubSealedBox {
            to: PublicKeyId(u64::from_be_bytes(bytes[..8].try_into().unwrap())),
            payload: bytes[8..].to_vec(),
        })
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(WireError::TrailingBytes)
        }
    }
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::RegIntro { .. } => TAG_REG_INTRO,
            Message::RegAck { .. } => TAG_REG_ACK,
            Message::RegFlood { .. } => TAG_REG_FLOOD,
            Message::ContractPropose { .. } => TAG_CONTRACT_PROPOSE,
            Message::RepQuery { .. } => TAG_REP_QUERY,
            Message::RepRelay { .. } => TAG_REP_RELAY,
            Message::RepAttest { .. } => TAG_REP_ATTEST,
            Message::ContractReject { .. } => TAG_CONTRACT_REJECT,
            Message::ContractCounter { .. } => TAG_CONTRACT_COUNTER,
            Message::ContractAck { .. } => TAG_CONTRACT_ACK,
            Message::BindingHash { .. } => TAG_BINDING_HASH,
            Message::BindingHashAck { .. } => TAG_BINDING_HASH_ACK,
            Message::Feedback { .. } => TAG_FEEDBACK,
            Message::WeightQuery { .. } => TAG_WEIGHT_QUERY,
            Message::CheatingReport { .. } => TAG_CHEATING_REPORT,
            Message::WeightAttest { .. } => TAG_WEIGHT_ATTEST,
            Message::RotateInit { .. } => TAG_ROTATE_INIT,
            Message::RotateGrant { .. } => TAG_ROTATE_GRANT,
            Message::RotateConfirm { .. } => TAG_ROTATE_CONFIRM,
            Message::ChangeNotice { .. } => TAG_CHANGE_NOTICE,
            Message::RevokeNotice { .. } => TAG_REVOKE_NOTICE,
            Message::DbWrite { .. } => TAG_DB_WRITE,
            Message::DbRead { .. } => TAG_DB_READ,
            Message::DbReadResult { .. } => TAG_DB_READ_RESULT,
        }
    }

    /// Stable kebab-case name, used in event payloads and adversary scripts.
    pub fn tag_name(&self) -> &'static str {
        match self {
            Message::RegIntro { .. } => "reg-intro",
            Message::RegAck { .. } => "reg-ack",
            Message::RegFlood { .. } => "reg-flood",
            Message::ContractPropose { .. } => "contract-propose",
            Message::RepQuery { .. } => "rep-query",
            Message::RepRelay { .. } => "rep-relay",
            Message::RepAttest { .. } => "rep-attest",
            Message::ContractReject { .. } => "contract-reject",
            Message::ContractCounter { .. } => "contract-counter",
            Message::ContractAck { .. } => "contract-ack",
            Message::BindingHash { .. } => "binding-hash",
            Message::BindingHashAck { .. } => "binding-hash-ack",
            Message::Feedback { .. } => "feedback",
            Message::WeightQuery { .. } => "weight-query",
            Message::CheatingReport { .. } => "cheating-report",
            Message::WeightAttest { .. } => "weight-attest",
            Message::RotateInit { .. } => "rotate-init",
            Message::RotateGrant { .. } => "rotate-grant",
            Message::RotateConfirm { .. } => "rotate-confirm",
            Message::ChangeNotice { .. } => "change-notice",
            Message::RevokeNotice { .. } => "revoke-notice",
            Message::DbWrite { .. } => "db-write",
            Message::DbRead { .. } => "db-read",
            Message::DbReadResult { .. } => "db-read-result",
        }
    }

    /// Canonical encoding: tag byte plus length-prefixed fields.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::RegIntro {
                newcomer,
                public_key,
                nonce,
                sig,
            } => FieldWriter::new(TAG_REG_INTRO)
                .server_id(newcomer)
                .public_key(*public_key)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::RegAck { boxed } => FieldWriter::new(TAG_REG_ACK).pub_sealed(boxed).finish(),
            Message::RegFlood {
                authority,
                newcomer,
                public_key,
                nonce,
                intro_sig,
                sig,
            } => FieldWriter::new(TAG_REG_FLOOD)
                .server_id(authority)
                .server_id(newcomer)
                .public_key(*public_key)
                .nonce(*nonce)
                .signature(intro_sig)
                .signature(sig)
                .finish(),
            Message::ContractPropose {
                from,
                share_size,
                duration,
                to,
                nonce,
            } => FieldWriter::new(TAG_CONTRACT_PROPOSE)
                .server_id(from)
                .u64(*share_size)
                .u64(*duration)
                .server_id(to)
                .nonce(*nonce)
                .finish(),
            Message::RepQuery { from, about, nonce } => FieldWriter::new(TAG_REP_QUERY)
                .server_id(from)
                .server_id(about)
                .nonce(*nonce)
                .finish(),
            Message::RepRelay {
                from_authority,
                requester,
                about,
                nonce,
                sig,
            } => FieldWriter::new(TAG_REP_RELAY)
                .server_id(from_authority)
                .server_id(requester)
                .server_id(about)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::RepAttest {
                from_authority,
                subject,
                transactions,
                reputation,
                sig,
            } => FieldWriter::new(TAG_REP_ATTEST)
                .server_id(from_authority)
                .server_id(subject)
                .u64(*transactions)
                .rational(reputation)
                .signature(sig)
                .finish(),
            Message::ContractReject { from, ack_nonce } => {
                FieldWriter::new(TAG_CONTRACT_REJECT)
                    .server_id(from)
                    .nonce(*ack_nonce)
                    .finish()
            }
            Message::ContractCounter {
                from,
                share_size,
                duration,
                to,
                nonce,
            } => FieldWriter::new(TAG_CONTRACT_COUNTER)
                .server_id(from)
                .u64(*share_size)
                .u64(*duration)
                .server_id(to)
                .nonce(*nonce)
                .finish(),
            Message::ContractAck { from, ack_nonce } => FieldWriter::new(TAG_CONTRACT_ACK)
                .server_id(from)
                .nonce(*ack_nonce)
                .finish(),
            Message::BindingHash { from, hash, sig } => FieldWriter::new(TAG_BINDING_HASH)
                .server_id(from)
                .hash(hash)
                .signature(sig)
                .finish(),
            Message::BindingHashAck { from, hash, sig } => {
                FieldWriter::new(TAG_BINDING_HASH_ACK)
                    .server_id(from)
                    .hash(hash)
                    .signature(sig)
                    .finish()
            }
            Message::Feedback {
                scorer,
                target,
                txn,
                score,
                sig,
            } => FieldWriter::new(TAG_FEEDBACK)
                .server_id(scorer)
                .server_id(target)
                .txn(txn)
                .score(*score)
                .signature(sig)
                .finish(),
            Message::WeightQuery {
                from_authority,
                scorer,
                txn,
                nonce,
                sig,
            } => FieldWriter::new(TAG_WEIGHT_QUERY)
                .server_id(from_authority)
                .server_id(scorer)
                .txn(txn)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::CheatingReport {
                from_authority,
                scorer,
                txn,
                nonce,
                sig,
            } => FieldWriter::new(TAG_CHEATING_REPORT)
                .server_id(from_authority)
                .server_id(scorer)
                .txn(txn)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::WeightAttest {
                from_authority,
                scorer,
                txn,
                transactions,
                reputation,
                ack_nonce,
                sig,
            } => FieldWriter::new(TAG_WEIGHT_ATTEST)
                .server_id(from_authority)
                .server_id(scorer)
                .txn(txn)
                .u64(*transactions)
                .rational(reputation)
                .nonce(*ack_nonce)
                .signature(sig)
                .finish(),
            Message::RotateInit { from, boxed } => FieldWriter::new(TAG_ROTATE_INIT)
                .server_id(from)
                .sealed(boxed)
                .finish(),
            Message::RotateGrant {
                db,
                key_box,
                new_authority,
                old_authority,
                notice_nonce,
                notice_sig,
            } => FieldWriter::new(TAG_ROTATE_GRANT)
                .server_id(db)
                .pub_sealed(key_box)
                .server_id(new_authority)
                .server_id(old_authority)
                .nonce(*notice_nonce)
                .signature(notice_sig)
                .finish(),
            Message::RotateConfirm { from, boxed } => FieldWriter::new(TAG_ROTATE_CONFIRM)
                .server_id(from)
                .sealed(boxed)
                .finish(),
            Message::ChangeNotice {
                db,
                new_authority,
                old_authority,
                nonce,
                sig,
            } => FieldWriter::new(TAG_CHANGE_NOTICE)
                .server_id(db)
                .server_id(new_authority)
                .server_id(old_authority)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::RevokeNotice {
                authority,
                leaving,
                nonce,
                sig,
            } => FieldWriter::new(TAG_REVOKE_NOTICE)
                .server_id(authority)
                .server_id(leaving)
                .nonce(*nonce)
                .signature(sig)
                .finish(),
            Message::DbWrite { from, boxed } => FieldWriter::new(TAG_DB_WRITE)
                .server_id(from)
                .sealed(boxed)
                .finish(),
            Message::DbRead { from, boxed } => FieldWriter::new(TAG_DB_READ)
                .server_id(from)
                .sealed(boxed)
                .finish(),
            Message::DbReadResult { from, boxed } => FieldWriter::new(TAG_DB_READ_RESULT)
                .server_id(from)
                .sealed(boxed)
                .finish(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        let (&tag, body) = bytes.split_first().ok_or(WireError::Truncated)?;
        let mut r = FieldReader::new(body);
        let message = match tag {
            TAG_REG_INTRO => Message::RegIntro {
                newcomer: r.server_id()?,
                public_key: r.public_key()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_REG_ACK => Message::RegAck {
                boxed: r.pub_sealed()?,
            },
            TAG_REG_FLOOD => Message::RegFlood {
                authority: r.server_id()?,
                newcomer: r.server_id()?,
                public_key: r.public_key()?,
                nonce: r.nonce()?,
                intro_sig: r.signature()?,
                sig: r.signature()?,
            },
            TAG_CONTRACT_PROPOSE => Message::ContractPropose {
                from: r.server_id()?,
                share_size: r.u64()?,
                duration: r.u64()?,
                to: r.server_id()?,
                nonce: r.nonce()?,
            },
            TAG_REP_QUERY => Message::RepQuery {
                from: r.server_id()?,
                about: r.server_id()?,
                nonce: r.nonce()?,
            },
            TAG_REP_RELAY => Message::RepRelay {
                from_authority: r.server_id()?,
                requester: r.server_id()?,
                about: r.server_id()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_REP_ATTEST => Message::RepAttest {
                from_authority: r.server_id()?,
                subject: r.server_id()?,
                transactions: r.u64()?,
                reputation: r.rational()?,
                sig: r.signature()?,
            },
            TAG_CONTRACT_REJECT => Message::ContractReject {
                from: r.server_id()?,
                ack_nonce: r.nonce()?,
            },
            TAG_CONTRACT_COUNTER => Message::ContractCounter {
                from: r.server_id()?,
                share_size: r.u64()?,
                duration: r.u64()?,
                to: r.server_id()?,
                nonce: r.nonce()?,
            },
            TAG_CONTRACT_ACK => Message::ContractAck {
                from: r.server_id()?,
                ack_nonce: r.nonce()?,
            },
            TAG_BINDING_HASH => Message::BindingHash {
                from: r.server_id()?,
                hash: r.hash()?,
                sig: r.signature()?,
            },
            TAG_BINDING_HASH_ACK => Message::BindingHashAck {
                from: r.server_id()?,
                hash: r.hash()?,
                sig: r.signature()?,
            },
            TAG_FEEDBACK => Message::Feedback {
                scorer: r.server_id()?,
                target: r.server_id()?,
                txn: r.txn()?,
                score: r.score()?,
                sig: r.signature()?,
            },
            TAG_WEIGHT_QUERY => Message::WeightQuery {
                from_authority: r.server_id()?,
                scorer: r.server_id()?,
                txn: r.txn()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_CHEATING_REPORT => Message::CheatingReport {
                from_authority: r.server_id()?,
                scorer: r.server_id()?,
                txn: r.txn()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_WEIGHT_ATTEST => Message::WeightAttest {
                from_authority: r.server_id()?,
                scorer: r.server_id()?,
                txn: r.txn()?,
                transactions: r.u64()?,
                reputation: r.rational()?,
                ack_nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_ROTATE_INIT => Message::RotateInit {
                from: r.server_id()?,
                boxed: r.sealed()?,
            },
            TAG_ROTATE_GRANT => Message::RotateGrant {
                db: r.server_id()?,
                key_box: r.pub_sealed()?,
                new_authority: r.server_id()?,
                old_authority: r.server_id()?,
                notice_nonce: r.nonce()?,
                notice_sig: r.signature()?,
            },
            TAG_ROTATE_CONFIRM => Message::RotateConfirm {
                from: r.server_id()?,
                boxed: r.sealed()?,
            },
            TAG_CHANGE_NOTICE => Message::ChangeNotice {
                db: r.server_id()?,
                new_authority: r.server_id()?,
                old_authority: r.server_id()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_REVOKE_NOTICE => Message::RevokeNotice {
                authority: r.server_id()?,
                leaving: r.server_id()?,
                nonce: r.nonce()?,
                sig: r.signature()?,
            },
            TAG_DB_WRITE => Message::DbWrite {
                from: r.server_id()?,
                boxed: r.sealed()?,
            },
            TAG_DB_READ => Message::DbRead {
                from: r.server_id()?,
                boxed: r.sealed()?,
            },
            TAG_DB_READ_RESULT => Message::DbReadResult {
                from: r.server_id()?,
                boxed: r.sealed()?,
            },
            other => return Err(WireError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(message)
    }
}

/// The byte sequence a signature covers: the owning message's tag followed
/// by the listed fields, length-prefixed exactly as on the wire.
pub fn sign_payload(tag: u8, build: impl FnOnce(FieldWriter) -> FieldWriter) -> Vec<u8> {
    build(FieldWriter::new(tag)).finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use message_security::digest;

    fn sample_sig() -> Signature {
        Signature {
            signer: PublicKeyId(0x1122334455667788),
            digest_of: digest(b"sample"),
        }
    }

    fn roundtrip(msg: Message) {
        let bytes = msg.encode();
        assert_eq!(bytes[0], msg.tag());
        let decoded = Message::decode(&bytes).unwrap();
        assert_eq!(decoded, msg);
    }

    #[test]
    fn all_variants_round_trip() {
        let txn = TransactionId {
            initiator_nonce: Nonce(11),
            responder_nonce: Nonce(22),
        };
        let sealed = SealedBox {
            key: SymmetricKeyId(9),
            payload: b"inner".to_vec(),
        };
        let pub_sealed = PubSealedBox {
            to: PublicKeyId(7),
            payload: b"ack".to_vec(),
        };
        let gr = Rational::new(BigInt::from(9000), BigInt::from(11));
        let msgs = vec![
            Message::RegIntro {
                newcomer: ServerId::new("s9"),
                public_key: PublicKeyId(5),
                nonce: Nonce(1),
                sig: sample_sig(),
            },
            Message::RegAck {
                boxed: pub_sealed.clone(),
            },
            Message::RegFlood {
                authority: ServerId::new("a1"),
                newcomer: ServerId::new("s9"),
                public_key: PublicKeyId(5),
                nonce: Nonce(1),
                intro_sig: sample_sig(),
                sig: sample_sig(),
            },
            Message::ContractPropose {
                from: ServerId::new("a"),
                share_size: 100,
                duration: 20,
                to: ServerId::new("b"),
                nonce: Nonce(3),
            },
            Message::RepQuery {
                from: ServerId::new("b"),
                about: ServerId::new("a"),
                nonce: Nonce(4),
            },
            Message::RepRelay {
                from_authority: ServerId::new("ab"),
                requester: ServerId::new("b"),
                about: ServerId::new("a"),
                nonce: Nonce(5),
                sig: sample_sig(),
            },
            Message::RepAttest {
                from_authority: ServerId::new("aa"),
                subject: ServerId::new("a"),
                transactions: 10,
                reputation: gr.clone(),
                sig: sample_sig(),
            },
            Message::ContractReject {
                from: ServerId::new("b"),
                ack_nonce: Nonce(4),
            },
            Message::ContractCounter {
                from: ServerId::new("b"),
                share_size: 120,
                duration: 30,
                to: ServerId::new("a"),
                nonce: Nonce(6),
            },
            Message::ContractAck {
                from: ServerId::new("a"),
                ack_nonce: Nonce(7),
            },
            Message::BindingHash {
                from: ServerId::new("a"),
                hash: digest(b"transcript"),
                sig: sample_sig(),
            },
            Message::BindingHashAck {
                from: ServerId::new("b"),
                hash: digest(b"transcript+10"),
                sig: sample_sig(),
            },
            Message::Feedback {
                scorer: ServerId::new("a"),
                target: ServerId::new("b"),
                txn,
                score: LocalScore::Negative,
                sig: sample_sig(),
            },
            Message::WeightQuery {
                from_authority: ServerId::new("ab"),
                scorer: ServerId::new("a"),
                txn,
                nonce: Nonce(8),
                sig: sample_sig(),
            },
            Message::WeightAttest {
                from_authority: ServerId::new("aa"),
                scorer: ServerId::new("a"),
                txn,
                transactions: 4,
                reputation: gr,
                ack_nonce: Nonce(9),
                sig: sample_sig(),
            },
            Message::CheatingReport {
                from_authority: ServerId::new("ab"),
                scorer: ServerId::new("a"),
                txn,
                nonce: Nonce(13),
                sig: sample_sig(),
            },
            Message::RotateInit {
                from: ServerId::new("old"),
                boxed: sealed.clone(),
            },
            Message::RotateGrant {
                db: ServerId::new("#db"),
                key_box: pub_sealed,
                new_authority: ServerId::new("new"),
                old_authority: ServerId::new("old"),
                notice_nonce: Nonce(10),
                notice_sig: sample_sig(),
            },
            Message::RotateConfirm {
                from: ServerId::new("new"),
                boxed: sealed.clone(),
            },
            Message::ChangeNotice {
                db: ServerId::new("#db"),
                new_authority: ServerId::new("new"),
                old_authority: ServerId::new("old"),
                nonce: Nonce(10),
                sig: sample_sig(),
            },
            Message::RevokeNotice {
                authority: ServerId::new("a1"),
                leaving: ServerId::new("s9"),
                nonce: Nonce(12),
                sig: sample_sig(),
            },
            Message::DbWrite {
                from: ServerId::new("a1"),
                boxed: sealed.clone(),
            },
            Message::DbRead {
                from: ServerId::new("a1"),
                boxed: sealed.clone(),
            },
            Message::DbReadResult {
                from: ServerId::new("#db"),
                boxed: sealed,
            },
        ];
        for msg in msgs {
            roundtrip(msg);
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(Message::decode(&[]).unwrap_err(), WireError::Truncated);
        assert_eq!(
            Message::decode(&[0x7F]).unwrap_err(),
            WireError::UnknownTag(0x7F)
        );
        // Truncated field length.
        assert_eq!(
            Message::decode(&[TAG_CONTRACT_ACK, 0, 0]).unwrap_err(),
            WireError::Truncated
        );
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let mut bytes = Message::ContractAck {
            from: ServerId::new("a"),
            ack_nonce: Nonce(1),
        }
        .encode();
        bytes.push(0);
        assert_eq!(Message::decode(&bytes).unwrap_err(), WireError::TrailingBytes);
    }

    #[test]
    fn decode_rejects_out_of_range_score() {
        let msg = Message::Feedback {
            scorer: ServerId::new("a"),
            target: ServerId::new("b"),
            txn: TransactionId {
                initiator_nonce: Nonce(1),
                responder_nonce: Nonce(2),
            },
            score: LocalScore::Positive,
            sig: sample_sig(),
        };
        let mut bytes = msg.encode();
        // The score byte is the single-byte field before the 40-byte
        // signature field; flip it to an illegal value.
        let score_pos = bytes.len() - 44 - 1;
        assert_eq!(bytes[score_pos], 0x01);
        bytes[score_pos] = 0x02;
        assert_eq!(
            Message::decode(&bytes).unwrap_err(),
            WireError::BadScore(0x02)
        );
    }

    #[test]
    fn encoding_is_field_order_sensitive() {
        let a = Message::ContractPropose {
            from: ServerId::new("a"),
            share_size: 100,
            duration: 20,
            to: ServerId::new("b"),
            nonce: Nonce(3),
        };
        let b = Message::ContractPropose {
            from: ServerId::new("a"),
            share_size: 20,
            duration: 100,
            to: ServerId::new("b"),
            nonce: Nonce(3),
        };
        assert_ne!(a.encode(), b.encode());
    }
}
