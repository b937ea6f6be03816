//! Deterministic discrete-event simulation of the servnet: nodes running
//! the reputation sub-protocols over a simulated network, with scripted
//! trades, elections, revocations, and adversaries. Produces a replayable
//! JSON-Lines event log and CSV reputation snapshots, both byte-stable
//! under a fixed seed.

pub mod adversary;
pub mod attacks;
pub mod db;
pub mod expect;
mod handlers;
pub mod log;
pub mod node;
pub mod replay;
pub mod scenario;
pub mod sim;

pub use expect::{evaluate, ExpectationResult};
pub use log::{Event, EventLog, Snapshot, SnapshotRow};
pub use replay::replay_ledgers;
pub use scenario::{
    AdversaryAction, CmpOp, Expectation, Honesty, NodeDecl, ScenarioScript, SnapshotField,
    TradeDecl, Vulnerabilities,
};
pub use sim::{build_sim, Sim, SimError};
