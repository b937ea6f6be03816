//! On-path adversary machinery: per-link interposers that tamper, capture,
//! replay, substitute, or impersonate, plus the identity adversary scripts
//! sign with. An adversary never gains a private key it was not scripted to
//! hold — attempts surface as explicit rejection events.

use message_security::{KeyPair, Nonce, PrivateKeyHandle, SecurityCtx, TransactionId};
use reputation_core::ServerId;
use serde_json::{json, Value};
use servnet_protocol::contract::binding_sign_payload;
use servnet_protocol::wire::TAG_BINDING_HASH;
use servnet_protocol::{Message, TradeParams};

use crate::scenario::TamperField;

/// The scripted adversary's own identity and keys.
#[derive(Debug)]
pub struct AdversaryIdentity {
    pub id: ServerId,
    pub keys: KeyPair,
}

pub fn adversary_id() -> ServerId {
    ServerId::new("@adversary")
}

/// Unordered link key.
pub fn link_key(a: &ServerId, b: &ServerId) -> (ServerId, ServerId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

#[derive(Debug)]
pub struct TamperState {
    pub from_tick: u64,
    pub field: TamperField,
    pub value: u64,
    pub done: bool,
}

#[derive(Debug)]
pub struct CaptureState {
    pub from: ServerId,
    pub to: ServerId,
    pub tag: String,
    pub occurrence: u32,
    pub seen: u32,
    pub bytes: Option<Vec<u8>>,
}

#[derive(Debug)]
pub struct SubstituteState {
    pub from: ServerId,
    pub to: ServerId,
    pub captured: Option<Vec<u8>>,
    pub done: bool,
}

#[derive(Debug)]
pub struct ImpersonationState {
    pub victim: ServerId,
    pub target: ServerId,
    pub params: TradeParams,
    /// The victim's private-key handle: known to the adversary, unusable
    /// without possession.
    pub victim_key: PrivateKeyHandle,
    pub injected_propose: Option<Vec<u8>>,
    pub responded: bool,
}

#[derive(Debug, Default)]
pub struct ObserveState {
    pub initiator_nonce: Option<Nonce>,
    pub txn: Option<TransactionId>,
}

/// One link's interposer; behaviors are armed by the scenario's adversary
/// actions.
#[derive(Debug, Default)]
pub struct Interposer {
    pub tamper: Option<TamperState>,
    pub captures: Vec<CaptureState>,
    pub substitute: Option<SubstituteState>,
    pub impersonation: Option<ImpersonationState>,
    pub observe: Option<ObserveState>,
}

/// What an interposed send turns into.
#[derive(Debug, Default)]
pub struct FilterOutcome {
    /// Messages to put on the wire: (physical from, to, bytes).
    pub deliver: Vec<(ServerId, ServerId, Vec<u8>)>,
    /// Events to log: (actor, kind, payload).
    pub events: Vec<(ServerId, String, Value)>,
}

impl Interposer {
    /// Processes one message crossing the link.
    pub fn filter(
        &mut self,
        from: &ServerId,
        to: &ServerId,
        bytes: Vec<u8>,
        tick: u64,
        sec: &mut SecurityCtx,
        adversary: &AdversaryIdentity,
    ) -> FilterOutcome {
        let mut out = FilterOutcome::default();
        let decoded = Message::decode(&bytes).ok();

        // Passive capture and observation run on everything crossing.
        if let Some(msg) = &decoded {
            for capture in &mut self.captures {
                if capture.bytes.is_none()
                    && &capture.from == from
                    && &capture.to == to
                    && msg.tag_name() == capture.tag
                {
                    capture.seen += 1;
                    if capture.seen == capture.occurrence {
                        capture.bytes = Some(bytes.clone());
                        out.events.push((
                            adversary.id.clone(),
                            "adversary-captured".to_string(),
                            json!({ "tag": capture.tag, "from": from.as_str(), "to": to.as_str() }),
                        ));
                    }
                }
            }
            if let Some(observe) = &mut self.observe {
                match msg {
                    Message::ContractPropose { nonce, .. } if observe.txn.is_none() => {
                        observe.initiator_nonce = Some(*nonce);
                    }
                    Message::ContractCounter { nonce, .. } => {
                        if let (Some(init), None) = (observe.initiator_nonce, observe.txn) {
                            observe.txn = Some(TransactionId {
                                initiator_nonce: init,
                                responder_nonce: *nonce,
                            });
                        }
                    }
                    _ => {}
                }
            }
        }

        // Impersonation swallows everything addressed to the victim and
        // answers in its place.
        if let Some(imp) = &mut self.impersonation {
            if to == &imp.victim {
                out.events.push((
                    adversary.id.clone(),
                    "adversary-intercepted".to_string(),
                    json!({
                        "tag": decoded.as_ref().map(|m| m.tag_name()).unwrap_or("?"),
                        "victim": imp.victim.as_str(),
                    }),
                ));
                if let (Some(Message::ContractCounter { nonce, .. }), false) =
                    (&decoded, imp.responded)
                {
                    imp.responded = true;
                    let ack = Message::ContractAck {
                        from: imp.victim.clone(),
                        ack_nonce: nonce.succ(),
                    };
                    let ack_bytes = ack.encode();
                    // Hash over the transcript the adversary can reconstruct:
                    // its own message 1, the captured 5b, its message 9b.
                    let mut transcript = imp
                        .injected_propose
                        .clone()
                        .unwrap_or_default();
                    transcript.extend_from_slice(&bytes);
                    transcript.extend_from_slice(&ack_bytes);
                    let hash = message_security::digest(&transcript);
                    let payload = binding_sign_payload(TAG_BINDING_HASH, &imp.victim, &hash);
                    // The signature the protocol demands cannot be produced:
                    // the adversary does not hold the victim's key.
                    if let Err(err) = sec.sign(&adversary.id, &imp.victim_key, &payload) {
                        out.events.push((
                            adversary.id.clone(),
                            "sign-rejected".to_string(),
                            json!({ "victim": imp.victim.as_str(), "error": err.to_string() }),
                        ));
                    }
                    let sig = sec
                        .sign(&adversary.id, &adversary.keys.private, &payload)
                        .expect("the adversary holds its own key");
                    let forged = Message::BindingHash {
                        from: imp.victim.clone(),
                        hash,
                        sig,
                    };
                    out.deliver
                        .push((imp.victim.clone(), imp.target.clone(), ack_bytes));
                    out.deliver
                        .push((imp.victim.clone(), imp.target.clone(), forged.encode()));
                }
                return out;
            }
        }

        // Substitution: swap the second binding hash for the first.
        if let Some(sub) = &mut self.substitute {
            if !sub.done
                && &sub.from == from
                && &sub.to == to
                && decoded
                    .as_ref()
                    .is_some_and(|m| matches!(m, Message::BindingHash { .. }))
            {
                match &sub.captured {
                    None => {
                        sub.captured = Some(bytes.clone());
                    }
                    Some(old) => {
                        sub.done = true;
                        out.events.push((
                            adversary.id.clone(),
                            "adversary-substituted".to_string(),
                            json!({ "from": from.as_str(), "to": to.as_str() }),
                        ));
                        out.deliver.push((from.clone(), to.clone(), old.clone()));
                        return out;
                    }
                }
            }
        }

        // Tampering rewrites contract proposals in flight.
        if let Some(tamper) = &mut self.tamper {
            if !tamper.done && tick >= tamper.from_tick {
                if let Some(Message::ContractPropose {
                    from: m_from,
                    share_size,
                    duration,
                    to: m_to,
                    nonce,
                }) = &decoded
                {
                    tamper.done = true;
                    let (share_size, duration) = match tamper.field {
                        TamperField::ShareSize => (tamper.value, *duration),
                        TamperField::Duration => (*share_size, tamper.value),
                    };
                    let patched = Message::ContractPropose {
                        from: m_from.clone(),
                        share_size,
                        duration,
                        to: m_to.clone(),
                        nonce: *nonce,
                    };
                    out.events.push((
                        adversary.id.clone(),
                        "adversary-tampered".to_string(),
                        json!({
                            "tag": "contract-propose",
                            "field": match tamper.field {
                                TamperField::ShareSize => "share-size",
                                TamperField::Duration => "duration",
                            },
                            "value": tamper.value,
                        }),
                    ));
                    out.deliver.push((from.clone(), to.clone(), patched.encode()));
                    return out;
                }
            }
        }

        out.deliver.push((from.clone(), to.clone(), bytes));
        out
    }

    /// Kicks off an impersonated contract: message 1 with the victim's
    /// identity and the adversary's own nonce stream.
    pub fn start_impersonation(
        &mut self,
        sec: &mut SecurityCtx,
        adversary: &AdversaryIdentity,
    ) -> Option<(ServerId, ServerId, Vec<u8>)> {
        let imp = self.impersonation.as_mut()?;
        let nonce = sec.fresh_nonce(&adversary.id);
        let propose = Message::ContractPropose {
            from: imp.victim.clone(),
            share_size: imp.params.share_size,
            duration: imp.params.duration,
            to: imp.target.clone(),
            nonce,
        };
        let bytes = propose.encode();
        imp.injected_propose = Some(bytes.clone());
        Some((imp.victim.clone(), imp.target.clone(), bytes))
    }
}
