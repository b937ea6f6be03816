//! The built-in attack suite: eight scripted scenarios, one per analyzed
//! attack, each asserting through declarative expectations that the defense
//! held. The CLI runs them via `attack-suite`; the acceptance tests rerun
//! them with the defenses toggled off as negative controls.

/// Common cast: one authority, two honest traders, one insider.
macro_rules! cast {
    () => {
        r#"
seed = 1009
until = 200
weight_mode = "unit"
election_period = 0

[[nodes]]
id = "a1"
role = "authority"

[[nodes]]
id = "alice"
authority = "a1"

[[nodes]]
id = "bob"
authority = "a1"

[[nodes]]
id = "mallory"
authority = "a1"
"#
    };
}

pub const CONTRACT_IMPERSONATION: &str = concat!(
    r#"name = "contract-impersonation""#,
    cast!(),
    r#"
[[adversaries]]
kind = "impersonate"
victim = "alice"
target = "bob"
at_tick = 10
share_size = 100
duration = 20

[[expectations]]
kind = "event-count"
event = "sign-rejected"
op = "ge"
value = 1

[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 0

[[expectations]]
kind = "event-count"
event = "session-aborted"
where_field = "reason"
where_equals = "forged-binding"
op = "ge"
value = 1
"#
);

pub const CONTRACT_MITM: &str = concat!(
    r#"name = "contract-mitm""#,
    cast!(),
    r#"
[[trades]]
tick = 10
initiator = "alice"
responder = "bob"
share_size = 100
duration = 20

[[adversaries]]
kind = "mitm-tamper"
a = "alice"
b = "bob"
from_tick = 0
field = "share-size"
value = 999999

[[expectations]]
kind = "event-count"
event = "adversary-tampered"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 0

[[expectations]]
kind = "event-count"
event = "session-aborted"
where_field = "reason"
where_equals = "transcript-mismatch"
op = "eq"
value = 2
"#
);

pub const CONTRACT_REPLAY_EARLY: &str = concat!(
    r#"name = "contract-replay-early""#,
    cast!(),
    r#"
[[trades]]
tick = 10
initiator = "alice"
responder = "bob"
share_size = 100
duration = 20

[[adversaries]]
kind = "replay"
a = "alice"
b = "bob"
capture = "contract-propose"
replay_at = 80

[[expectations]]
kind = "event-count"
event = "adversary-replayed"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "replay-rejected"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 2

[[expectations]]
kind = "event-count"
event = "feedback-outcome"
op = "eq"
value = 2
"#
);

pub const CONTRACT_REPLAY_BINDING: &str = concat!(
    r#"name = "contract-replay-binding""#,
    cast!(),
    r#"
[[trades]]
tick = 10
initiator = "alice"
responder = "bob"
share_size = 100
duration = 20

[[trades]]
tick = 60
initiator = "alice"
responder = "bob"
share_size = 100
duration = 20

[[adversaries]]
kind = "substitute-binding"
a = "alice"
b = "bob"

[[expectations]]
kind = "event-count"
event = "adversary-substituted"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 2

[[expectations]]
kind = "event-count"
event = "session-aborted"
where_field = "reason"
where_equals = "transcript-mismatch"
op = "eq"
value = 2
"#
);

pub const FEEDBACK_IMPERSONATION: &str = concat!(
    r#"name = "feedback-impersonation""#,
    cast!(),
    r#"
[[trades]]
tick = 10
initiator = "alice"
responder = "bob"
share_size = 100
duration = 20

[[adversaries]]
kind = "forge-feedback"
as_scorer = "alice"
target = "bob"
at_tick = 20
score = -1

[[expectations]]
kind = "event-count"
event = "adversary-forged-feedback"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "sign-rejected"
op = "ge"
value = 1

[[expectations]]
kind = "event-count"
event = "feedback-rejected"
where_field = "reason"
where_equals = "bad-signature"
op = "ge"
value = 1

[[expectations]]
kind = "snapshot"
node = "bob"
field = "neg"
op = "eq"
value = "0"

[[expectations]]
kind = "snapshot"
node = "bob"
field = "transactions"
op = "eq"
value = "1"
"#
);

pub const FEEDBACK_FALSE_SCORER: &str = concat!(
    r#"name = "feedback-false-scorer""#,
    cast!(),
    r#"
[[nodes]]
id = "liar"
authority = "a1"
honesty = "false-scorer"

[[trades]]
tick = 10
initiator = "liar"
responder = "bob"
share_size = 100
duration = 20

[[expectations]]
kind = "event-count"
event = "cheating-detected"
op = "ge"
value = 1

[[expectations]]
kind = "event-count"
event = "feedback-outcome"
where_field = "outcome"
where_equals = "giver-cheating-flagged"
op = "eq"
value = 1

[[expectations]]
kind = "snapshot"
node = "bob"
field = "pos"
op = "eq"
value = "0"

[[expectations]]
kind = "snapshot"
node = "bob"
field = "neg"
op = "eq"
value = "0"

[[expectations]]
kind = "snapshot"
node = "bob"
field = "transactions"
op = "eq"
value = "1"
"#
);

pub const FEEDBACK_DROPPER: &str = concat!(
    r#"name = "feedback-dropper""#,
    cast!(),
    r#"
[[nodes]]
id = "dropper"
authority = "a1"
honesty = "drop-feedback"

[[trades]]
tick = 10
initiator = "alice"
responder = "dropper"
share_size = 100
duration = 20

[[expectations]]
kind = "event-count"
event = "feedback-dropped-by-receiver"
op = "eq"
value = 1

[[expectations]]
kind = "event-count"
event = "feedback-outcome"
where_field = "outcome"
where_equals = "receiver-dropped-recovered"
op = "eq"
value = 1

[[expectations]]
kind = "snapshot"
node = "dropper"
field = "neg"
op = "eq"
value = "1"
"#
);

pub const FAKE_AUTHORITY_NOTICE: &str = concat!(
    r#"name = "fake-authority-notice""#,
    cast!(),
    r#"
[[adversaries]]
kind = "fake-authority-notice"
actor = "mallory"
claimed_new = "mallory"
claimed_old = "a1"
at_tick = 15

[[adversaries]]
kind = "rogue-rotate-init"
actor = "mallory"
at_tick = 30

[[expectations]]
kind = "event-count"
event = "change-notice-ignored"
op = "ge"
value = 3

[[expectations]]
kind = "event-count"
event = "change-notice-accepted"
op = "eq"
value = 0

[[expectations]]
kind = "event-count"
event = "seal-rejected"
op = "ge"
value = 1

[[expectations]]
kind = "event-count"
event = "db-access-denied"
where_field = "reason"
where_equals = "not-an-authority"
op = "ge"
value = 1

[[expectations]]
kind = "event-count"
event = "rotation-committed"
op = "eq"
value = 0

[[expectations]]
kind = "snapshot"
node = "alice"
field = "authority"
op = "eq"
value = "a1"
"#
);

/// Every built-in attack scenario, in execution order.
pub fn all() -> Vec<&'static str> {
    vec![
        CONTRACT_IMPERSONATION,
        CONTRACT_MITM,
        CONTRACT_REPLAY_EARLY,
        CONTRACT_REPLAY_BINDING,
        FEEDBACK_IMPERSONATION,
        FEEDBACK_FALSE_SCORER,
        FEEDBACK_DROPPER,
        FAKE_AUTHORITY_NOTICE,
    ]
}
