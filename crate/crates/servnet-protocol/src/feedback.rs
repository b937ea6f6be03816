//! Feedback: after a bound contract completes, each party sends one signed
//! ±1 for the other along two paths — through the scored party, and straight
//! to the scored party's authority. The authority compares the copies to
//! catch cheating givers and recovers from dropped forwards via the direct
//! copy.

use message_security::{PrivateKeyHandle, SecurityCtx, SecurityError, Signature, TransactionId};
use reputation_core::{LocalScore, ServerId};

use crate::directory::DirectoryView;
use crate::wire::{sign_payload, Message, TAG_FEEDBACK};
use crate::Tick;

/// Bytes the feedback signature covers: transaction id, score, and the
/// scorer's identity (so nobody else can send feedback on their behalf).
pub fn feedback_sign_payload(txn: &TransactionId, score: LocalScore, scorer: &ServerId) -> Vec<u8> {
    sign_payload(TAG_FEEDBACK, |w| w.txn(txn).score(score).server_id(scorer))
}

/// Builds the signed feedback message. The identical bytes travel both
/// delivery paths.
pub fn make_feedback(
    scorer: &ServerId,
    key: &PrivateKeyHandle,
    target: &ServerId,
    txn: TransactionId,
    score: LocalScore,
    sec: &mut SecurityCtx,
) -> Result<Message, SecurityError> {
    let payload = feedback_sign_payload(&txn, score, scorer);
    let sig = sec.sign(scorer, key, &payload)?;
    Ok(Message::Feedback {
        scorer: scorer.clone(),
        target: target.clone(),
        txn,
        score,
        sig,
    })
}

/// Verifies a feedback body against the scorer's registered public key.
pub fn verify_feedback(
    scorer: &ServerId,
    txn: &TransactionId,
    score: LocalScore,
    sig: &Signature,
    directory: &dyn DirectoryView,
    sec: &SecurityCtx,
) -> bool {
    let Some(key) = directory.public_key_of(scorer) else {
        return false;
    };
    let payload = feedback_sign_payload(txn, score, scorer);
    sec.verify(&payload, sig, &key)
}

/// Bytes covered by an authority's weight-query signature.
pub fn weight_query_sign_payload(
    from_authority: &ServerId,
    scorer: &ServerId,
    txn: &TransactionId,
    nonce: message_security::Nonce,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_WEIGHT_QUERY, |w| {
        w.server_id(from_authority)
            .server_id(scorer)
            .txn(txn)
            .nonce(nonce)
    })
}

/// Bytes covered by a weight-attestation signature.
pub fn weight_attest_sign_payload(
    from_authority: &ServerId,
    scorer: &ServerId,
    txn: &TransactionId,
    transactions: u64,
    reputation: &reputation_core::Rational,
    ack_nonce: message_security::Nonce,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_WEIGHT_ATTEST, |w| {
        w.server_id(from_authority)
            .server_id(scorer)
            .txn(txn)
            .u64(transactions)
            .rational(reputation)
            .nonce(ack_nonce)
    })
}

/// Bytes covered by a cheating-report signature.
pub fn cheating_report_sign_payload(
    from_authority: &ServerId,
    scorer: &ServerId,
    txn: &TransactionId,
    nonce: message_security::Nonce,
) -> Vec<u8> {
    sign_payload(crate::wire::TAG_CHEATING_REPORT, |w| {
        w.server_id(from_authority)
            .server_id(scorer)
            .txn(txn)
            .nonce(nonce)
    })
}

/// Which route a feedback copy arrived by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackPath {
    /// Scorer → authority.
    Direct,
    /// Scorer → scored party → authority.
    ViaReceiver,
}

/// The authority's verdict for one (transaction, scorer) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackOutcomeKind {
    /// Both copies agreed (or a single surviving valid copy was applied).
    Accepted,
    /// The two validly signed copies disagreed: score discarded, the
    /// transaction still counts against the target's `T`.
    GiverCheatingFlagged,
    /// The forwarded copy never arrived; the direct copy was applied and the
    /// drop logged against the receiver.
    ReceiverDroppedRecovered,
    /// A copy arrived after the outcome was already decided.
    DuplicateIgnored,
}

impl FeedbackOutcomeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeedbackOutcomeKind::Accepted => "accepted",
            FeedbackOutcomeKind::GiverCheatingFlagged => "giver-cheating-flagged",
            FeedbackOutcomeKind::ReceiverDroppedRecovered => "receiver-dropped-recovered",
            FeedbackOutcomeKind::DuplicateIgnored => "duplicate-ignored",
        }
    }
}

/// A decided outcome, before the ledger update is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackDecision {
    pub kind: FeedbackOutcomeKind,
    /// The score to apply; `None` for flagged outcomes (only `T` bumps).
    pub score: Option<LocalScore>,
}

#[derive(Debug, Clone)]
struct CopyRecord {
    score: LocalScore,
    raw: Vec<u8>,
}

/// What recording a copy produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CopyOutcome {
    /// First copy: wait for the other path until `deadline`.
    Waiting { deadline: Tick },
    /// Both paths present: decide now.
    Decide(FeedbackDecision),
    /// Outcome already decided; this copy is ignored.
    Duplicate,
}

/// Collects the two delivery copies for one (transaction, scorer) pair at
/// the target's authority, and decides the outcome.
#[derive(Debug, Clone)]
pub struct FeedbackTracker {
    pub txn: TransactionId,
    pub scorer: ServerId,
    pub target: ServerId,
    direct: Option<CopyRecord>,
    via_receiver: Option<CopyRecord>,
    conflict: bool,
    pub decided: bool,
    pub deadline: Option<Tick>,
}

impl FeedbackTracker {
    /// Registers external cheating evidence (e.g. copies naming different
    /// targets); forces a flagged outcome at decision time.
    pub fn mark_conflict(&mut self) {
        self.conflict = true;
    }

    /// Whether the direct-path slot is already filled. Used to classify
    /// arrivals when both delivery paths collapse onto one node (the scored
    /// party is its own authority of record).
    pub fn has_direct(&self) -> bool {
        self.direct.is_some()
    }

    pub fn new(txn: TransactionId, scorer: ServerId, target: ServerId) -> Self {
        Self {
            txn,
            scorer,
            target,
            direct: None,
            via_receiver: None,
            conflict: false,
            decided: false,
            deadline: None,
        }
    }

    /// Records a validly signed copy. Invalid copies must be discarded by
    /// the caller before this point — they do not count as arrivals.
    pub fn record_copy(
        &mut self,
        path: FeedbackPath,
        score: LocalScore,
        raw: &[u8],
        tick: Tick,
        timeout: Tick,
    ) -> CopyOutcome {
        if self.decided {
            return CopyOutcome::Duplicate;
        }
        let slot = match path {
            FeedbackPath::Direct => &mut self.direct,
            FeedbackPath::ViaReceiver => &mut self.via_receiver,
        };
        match slot {
            Some(existing) => {
                if existing.raw != raw {
                    // Two different validly signed bodies on one path is
                    // cheating evidence in its own right.
                    self.conflict = true;
                }
                CopyOutcome::Duplicate
            }
            None => {
                *slot = Some(CopyRecord {
                    score,
                    raw: raw.to_vec(),
                });
                match (&self.direct, &self.via_receiver) {
                    (Some(d), Some(v)) => {
                        self.decided = true;
                        if d.raw == v.raw && !self.conflict {
                            CopyOutcome::Decide(FeedbackDecision {
                                kind: FeedbackOutcomeKind::Accepted,
                                score: Some(d.score),
                            })
                        } else {
                            CopyOutcome::Decide(FeedbackDecision {
                                kind: FeedbackOutcomeKind::GiverCheatingFlagged,
                                score: None,
                            })
                        }
                    }
                    _ => {
                        let deadline = tick.saturating_add(timeout);
                        self.deadline = Some(deadline);
                        CopyOutcome::Waiting { deadline }
                    }
                }
            }
        }
    }

    /// Fires when the waiting window closes with only one copy present.
    pub fn on_deadline(&mut self) -> Option<FeedbackDecision> {
        if self.decided {
            return None;
        }
        let decision = match (&self.direct, &self.via_receiver) {
            (Some(d), None) => {
                if self.conflict {
                    FeedbackDecision {
                        kind: FeedbackOutcomeKind::GiverCheatingFlagged,
                        score: None,
                    }
                } else {
                    FeedbackDecision {
                        kind: FeedbackOutcomeKind::ReceiverDroppedRecovered,
                        score: Some(d.score),
                    }
                }
            }
            (None, Some(v)) => {
                if self.conflict {
                    FeedbackDecision {
                        kind: FeedbackOutcomeKind::GiverCheatingFlagged,
                        score: None,
                    }
                } else {
                    FeedbackDecision {
                        kind: FeedbackOutcomeKind::Accepted,
                        score: Some(v.score),
                    }
                }
            }
            _ => return None,
        };
        self.decided = true;
        Some(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directory::AuthorityDirectory;
    use message_security::Nonce;

    fn txn() -> TransactionId {
        TransactionId {
            initiator_nonce: Nonce(1),
            responder_nonce: Nonce(2),
        }
    }

    #[test]
    fn altered_score_inside_the_signed_body_fails_verification() {
        let mut sec = SecurityCtx::new(5);
        let scorer = ServerId::new("a");
        let target = ServerId::new("b");
        let kp = sec.keygen(&scorer, 1);
        let mut dir = AuthorityDirectory::new();
        dir.insert(scorer.clone(), ServerId::new("auth"), kp.public);
        let msg = make_feedback(
            &scorer,
            &kp.private,
            &target,
            txn(),
            LocalScore::Negative,
            &mut sec,
        )
        .unwrap();
        let crate::wire::Message::Feedback {
            scorer: s,
            txn: t,
            sig,
            ..
        } = &msg
        else {
            panic!("expected feedback");
        };
        assert!(verify_feedback(s, t, LocalScore::Negative, sig, &dir, &sec));
        // The receiver flips the -1 to +1 before forwarding: the signature
        // no longer covers the bytes.
        assert!(!verify_feedback(s, t, LocalScore::Positive, sig, &dir, &sec));
    }

    fn tracker() -> FeedbackTracker {
        FeedbackTracker::new(txn(), ServerId::new("a"), ServerId::new("b"))
    }

    #[test]
    fn matching_copies_are_accepted() {
        let mut t = tracker();
        let raw = b"body".to_vec();
        assert!(matches!(
            t.record_copy(FeedbackPath::Direct, LocalScore::Negative, &raw, 5, 10),
            CopyOutcome::Waiting { deadline: 15 }
        ));
        let decision = match t.record_copy(FeedbackPath::ViaReceiver, LocalScore::Negative, &raw, 6, 10)
        {
            CopyOutcome::Decide(d) => d,
            other => panic!("expected decision, got {other:?}"),
        };
        assert_eq!(decision.kind, FeedbackOutcomeKind::Accepted);
        assert_eq!(decision.score, Some(LocalScore::Negative));
    }

    #[test]
    fn differing_copies_flag_the_giver() {
        let mut t = tracker();
        t.record_copy(FeedbackPath::ViaReceiver, LocalScore::Positive, b"plus", 5, 10);
        let decision = match t.record_copy(FeedbackPath::Direct, LocalScore::Negative, b"minus", 6, 10)
        {
            CopyOutcome::Decide(d) => d,
            other => panic!("expected decision, got {other:?}"),
        };
        assert_eq!(decision.kind, FeedbackOutcomeKind::GiverCheatingFlagged);
        assert_eq!(decision.score, None);
    }

    #[test]
    fn direct_only_recovers_after_deadline() {
        let mut t = tracker();
        t.record_copy(FeedbackPath::Direct, LocalScore::Negative, b"body", 5, 10);
        let decision = t.on_deadline().unwrap();
        assert_eq!(decision.kind, FeedbackOutcomeKind::ReceiverDroppedRecovered);
        assert_eq!(decision.score, Some(LocalScore::Negative));
        // A late forwarded copy is a duplicate.
        assert_eq!(
            t.record_copy(FeedbackPath::ViaReceiver, LocalScore::Negative, b"body", 20, 10),
            CopyOutcome::Duplicate
        );
    }

    #[test]
    fn forwarded_only_is_accepted_after_deadline() {
        let mut t = tracker();
        t.record_copy(FeedbackPath::ViaReceiver, LocalScore::Positive, b"body", 5, 10);
        let decision = t.on_deadline().unwrap();
        assert_eq!(decision.kind, FeedbackOutcomeKind::Accepted);
    }

    #[test]
    fn repeated_identical_copy_is_duplicate() {
        let mut t = tracker();
        t.record_copy(FeedbackPath::Direct, LocalScore::Positive, b"body", 5, 10);
        assert_eq!(
            t.record_copy(FeedbackPath::Direct, LocalScore::Positive, b"body", 6, 10),
            CopyOutcome::Duplicate
        );
    }

    #[test]
    fn same_path_conflicting_bodies_flag_at_decision() {
        let mut t = tracker();
        t.record_copy(FeedbackPath::Direct, LocalScore::Positive, b"one", 5, 10);
        t.record_copy(FeedbackPath::Direct, LocalScore::Negative, b"two", 6, 10);
        let decision = t.on_deadline().unwrap();
        assert_eq!(decision.kind, FeedbackOutcomeKind::GiverCheatingFlagged);
    }
}
