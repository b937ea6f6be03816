//! Periodic authority election: the highest-reputation leaf challenges the
//! sitting authority and takes over when its reputation exceeds the
//! configured factor of the incumbent's.

use reputation_core::{GlobalReputation, Rational, ServerId};

/// Result of one election round in one subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElectionOutcome {
    Keep,
    Change { to: ServerId },
}

/// Picks the contender (max reputation, ties broken by smallest pseudonym)
/// among `leaves` and compares it against `factor * current`.
///
/// The comparison is strict: an equal-reputation contender never displaces
/// the incumbent. `factor = 1` is the plain "higher than the current
/// authority" rule.
pub fn elect_authority(
    leaves: &[(ServerId, GlobalReputation)],
    current: &GlobalReputation,
    factor: &Rational,
) -> ElectionOutcome {
    let contender = leaves.iter().max_by(|(a_id, a_gr), (b_id, b_gr)| {
        // Higher reputation wins; on ties the lexicographically smaller
        // pseudonym must win, hence the reversed id comparison.
        a_gr.cmp(b_gr).then_with(|| b_id.cmp(a_id))
    });
    match contender {
        Some((id, gr)) if gr.as_rational() > &(factor * current.as_rational()) => {
            ElectionOutcome::Change { to: id.clone() }
        }
        _ => ElectionOutcome::Keep,
    }
}
