//! Message catalog and per-role state machines for the servnet
//! sub-protocols: registration, contract establishment, feedback delivery,
//! authority election and key rotation, and server revocation.
//!
//! Every message has a canonical byte encoding (see [`wire`] and
//! `docs/wire.md`); signatures and transcript hashes are computed over those
//! bytes. State machines validate each transition and map every failure to
//! an explicit [`AbortReason`].
//!
//! Nodes here are passive: they consume a message plus a [`SessionCtx`] and
//! return effects (messages to send, terminal outcomes). The simulation
//! harness owns delivery, timers, and logging.

pub mod contract;
pub mod directory;
pub mod election;
pub mod feedback;
pub mod records;
pub mod registration;
pub mod rotation;
pub mod wire;

pub use contract::{
    AbortReason, AcceptPolicy, ContractSession, Role, SessionCtx, SessionEffect, SessionState,
    ThresholdPolicy,
};
pub use directory::{AuthorityDirectory, DirectoryView};
pub use election::{elect_authority, ElectionOutcome};
pub use reputation_core::ServerId;
pub use wire::{Message, WireError};

/// Simulated time, in integer ticks.
pub type Tick = u64;

/// The share size and storage duration one party proposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TradeParams {
    pub share_size: u64,
    pub duration: u64,
}

impl TradeParams {
    /// Both the size and the duration must be positive.
    pub fn new(share_size: u64, duration: u64) -> Result<Self, InvalidTradeParams> {
        if share_size == 0 || duration == 0 {
            return Err(InvalidTradeParams {
                share_size,
                duration,
            });
        }
        Ok(Self {
            share_size,
            duration,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("trade params must be positive, got size {share_size} duration {duration}")]
pub struct InvalidTradeParams {
    pub share_size: u64,
    pub duration: u64,
}
