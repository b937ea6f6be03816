//! Reputation algebra for the servnet.
//!
//! A server's standing is a [`ScoreLedger`] holding a transaction count `T`
//! and two weighted accumulators `POS` and `NEG`. Its global reputation is
//! `GR = T * POS / (NEG + 1)`. Feedback carries a ±1 [`LocalScore`] whose
//! weight is either 1 ([`WeightMode::Unit`]) or the scorer's own reputation
//! ([`WeightMode::ReputationWeighted`]).
//!
//! All accumulators are exact rationals so the closed-form fairness model
//! ([`closed_form_gr`]) can be checked against step-by-step simulation with
//! strict equality. External reports render values to six decimal places via
//! [`to_decimal_string`].

use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

/// Exact rational used for every accumulator and weight.
pub type Rational = BigRational;

/// Re-exported so dependents can build [`Rational`] values without their own
/// bignum dependency.
pub use num::bigint::BigInt as RationalInt;

/// A server's pseudonym — the only identity a node ever has.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(String);

impl ServerId {
    pub fn new(pseudonym: impl Into<String>) -> Self {
        Self(pseudonym.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ServerId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// The ±1 judgment one transaction party gives the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalScore {
    Positive,
    Negative,
}

impl LocalScore {
    /// Parses a raw score value, rejecting anything outside {+1, -1}.
    pub fn from_value(value: i8) -> Result<Self, ScoreError> {
        match value {
            1 => Ok(Self::Positive),
            -1 => Ok(Self::Negative),
            other => Err(ScoreError::InvalidScore(other)),
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Self::Positive => 1,
            Self::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreError {
    /// Local scores are exactly +1 or -1.
    InvalidScore(i8),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidScore(v) => write!(f, "local score must be +1 or -1, got {v}"),
        }
    }
}

impl std::error::Error for ScoreError {}

/// How feedback is weighted when accumulated into a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightMode {
    /// Every scorer counts 1, as in the fairness analysis.
    Unit,
    /// A scorer counts by its own global reputation at feedback time.
    ReputationWeighted,
}

/// Cumulative global reputation. Non-negative by construction; a fresh
/// server starts at exactly 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GlobalReputation(Rational);

impl GlobalReputation {
    pub fn zero() -> Self {
        Self(Rational::zero())
    }

    /// Wraps an exact value, rejecting negatives.
    pub fn from_rational(value: Rational) -> Result<Self, ReputationError> {
        if value.is_negative() {
            return Err(ReputationError::NegativeReputation(value.to_string()));
        }
        Ok(Self(value))
    }

    pub fn from_integer(value: u64) -> Self {
        Self(Rational::from_integer(BigInt::from(value)))
    }

    pub fn as_rational(&self) -> &Rational {
        &self.0
    }

    pub fn into_rational(self) -> Rational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Display for GlobalReputation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_decimal_string(&self.0, 6))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReputationError {
    NegativeReputation(String),
}

impl fmt::Display for ReputationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeReputation(v) => write!(f, "global reputation cannot be negative: {v}"),
        }
    }
}

impl std::error::Error for ReputationError {}

/// Per-server accumulator: `T` transactions, weighted `POS` and `NEG` sums.
///
/// Every processed feedback event increments `transactions` by exactly one,
/// including feedback whose score was discarded as untrusted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreLedger {
    owner: ServerId,
    transactions: u64,
    pos_accum: Rational,
    neg_accum: Rational,
}

impl ScoreLedger {
    /// Reconstructs a ledger from stored parts (e.g. a database record).
    /// The accumulators must be non-negative.
    pub fn from_parts(
        owner: ServerId,
        transactions: u64,
        pos_accum: Rational,
        neg_accum: Rational,
    ) -> Result<Self, ReputationError> {
        if pos_accum.is_negative() {
            return Err(ReputationError::NegativeReputation(pos_accum.to_string()));
        }
        if neg_accum.is_negative() {
            return Err(ReputationError::NegativeReputation(neg_accum.to_string()));
        }
        Ok(Self {
            owner,
            transactions,
            pos_accum,
            neg_accum,
        })
    }

    pub fn owner(&self) -> &ServerId {
        &self.owner
    }

    pub fn transactions(&self) -> u64 {
        self.transactions
    }

    pub fn pos_accum(&self) -> &Rational {
        &self.pos_accum
    }

    pub fn neg_accum(&self) -> &Rational {
        &self.neg_accum
    }
}

/// A fresh ledger: `(T, POS, NEG) = (0, 0, 0)`, so `GR = 0`.
pub fn new_ledger(owner: ServerId) -> ScoreLedger {
    ScoreLedger {
        owner,
        transactions: 0,
        pos_accum: Rational::zero(),
        neg_accum: Rational::zero(),
    }
}

/// The weight a scorer's ±1 carries: 1 under [`WeightMode::Unit`], the
/// scorer's reputation under [`WeightMode::ReputationWeighted`].
pub fn scorer_weight(reputation: &GlobalReputation, mode: WeightMode) -> Rational {
    match mode {
        WeightMode::Unit => Rational::one(),
        WeightMode::ReputationWeighted => reputation.as_rational().clone(),
    }
}

/// Accumulates one feedback into a ledger.
///
/// `T` always increments; the score's weight lands in `POS` or `NEG`
/// depending on its sign. Pure: the input ledger is untouched.
pub fn apply_feedback(
    ledger: &ScoreLedger,
    score: LocalScore,
    scorer_reputation: &GlobalReputation,
    mode: WeightMode,
) -> ScoreLedger {
    let weight = scorer_weight(scorer_reputation, mode);
    let mut next = ledger.clone();
    next.transactions += 1;
    match score {
        LocalScore::Positive => next.pos_accum += weight,
        LocalScore::Negative => next.neg_accum += weight,
    }
    next
}

/// Increments `T` without touching the accumulators. Used when a completed
/// transaction's score was discarded (e.g. the scorer was caught cheating).
pub fn record_unscored_transaction(ledger: &ScoreLedger) -> ScoreLedger {
    let mut next = ledger.clone();
    next.transactions += 1;
    next
}

/// `GR = T * POS / (NEG + 1)`. Finite and non-negative for every reachable
/// ledger since `NEG + 1 >= 1`.
pub fn global_reputation(ledger: &ScoreLedger) -> GlobalReputation {
    let t = Rational::from_integer(BigInt::from(ledger.transactions));
    let value = t * &ledger.pos_accum / (&ledger.neg_accum + Rational::one());
    GlobalReputation(value)
}

/// Fairness-model parameters: a peer with `transactions` total transactions
/// that receives a negative score on every `period`-th one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FairnessParams {
    transactions: u64,
    period: u64,
}

impl FairnessParams {
    /// `period` must be at least 2: a peer negative on every transaction is
    /// outside the model.
    pub fn new(transactions: u64, period: u64) -> Result<Self, FairnessError> {
        if period < 2 {
            return Err(FairnessError::PeriodTooSmall(period));
        }
        Ok(Self {
            transactions,
            period,
        })
    }

    pub fn transactions(&self) -> u64 {
        self.transactions
    }

    pub fn period(&self) -> u64 {
        self.period
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FairnessError {
    /// The negative-score period must be >= 2.
    PeriodTooSmall(u64),
    /// The threshold does not fit in a u64.
    ThresholdOverflow,
}

impl fmt::Display for FairnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PeriodTooSmall(m) => {
                write!(f, "negative-score period must be at least 2, got {m}")
            }
            Self::ThresholdOverflow => f.write_str("fairness threshold exceeds u64 range"),
        }
    }
}

impl std::error::Error for FairnessError {}

/// Closed-form reputation of a fairness-model peer: `t^2 (m-1) / (t + m)`.
///
/// This is the unit-weight `GR` of a peer whose `t` transactions contain a
/// negative every `m`-th one, evaluated at a period boundary.
pub fn closed_form_gr(params: &FairnessParams) -> GlobalReputation {
    let t = BigInt::from(params.transactions);
    let m = BigInt::from(params.period);
    let numer = &t * &t * (&m - BigInt::one());
    let denom = &t + &m;
    GlobalReputation(Rational::new(numer, denom))
}

/// Smallest `T1` such that a period-`m1` peer's closed-form reputation
/// strictly exceeds `peer2`'s.
///
/// Solved exactly from the quadratic `(m1-1) T1^2 - k T1 - m1 k > 0` where
/// `k` is peer 2's closed-form value: take the positive root via an integer
/// square root and step to the first integer strictly beyond it.
pub fn fairness_threshold(m1: u64, peer2: &FairnessParams) -> Result<u64, FairnessError> {
    if m1 < 2 {
        return Err(FairnessError::PeriodTooSmall(m1));
    }
    let k = closed_form_gr(peer2).into_rational();
    let p = k.numer().clone();
    let q = k.denom().clone();
    let m1_big = BigInt::from(m1);
    let m1_minus_1 = &m1_big - BigInt::one();

    // poly(n) = (m1-1) q n^2 - p n - m1 p, positive iff n is past the + root.
    let poly_positive = |n: &BigInt| -> bool {
        let value = &m1_minus_1 * &q * n * n - &p * n - &m1_big * &p;
        value.is_positive()
    };

    let discriminant = &p * &p + BigInt::from(4u8) * &m1_big * &m1_minus_1 * &p * &q;
    let root_floor = discriminant.sqrt();
    let denom = BigInt::from(2u8) * &m1_minus_1 * &q;
    let base = (&p + root_floor) / denom;

    let mut candidate = base;
    loop {
        if poly_positive(&candidate) {
            return u64::try_from(candidate).map_err(|_| FairnessError::ThresholdOverflow);
        }
        candidate += BigInt::one();
    }
}

/// Same threshold by exhaustive linear scan over the closed forms. Slow but
/// direct; kept as the cross-check route for [`fairness_threshold`].
pub fn fairness_threshold_scan(m1: u64, peer2: &FairnessParams) -> Result<u64, FairnessError> {
    if m1 < 2 {
        return Err(FairnessError::PeriodTooSmall(m1));
    }
    let target = closed_form_gr(peer2);
    for t1 in 0u64.. {
        let candidate = FairnessParams::new(t1, m1)?;
        if closed_form_gr(&candidate) > target {
            return Ok(t1);
        }
    }
    unreachable!("closed-form reputation grows without bound in t")
}

/// Renders an exact rational as a fixed-point decimal string with the given
/// number of places, rounding half away from zero.
pub fn to_decimal_string(value: &Rational, places: usize) -> String {
    let negative = value.is_negative();
    let magnitude = value.abs();
    let scale = BigInt::from(10u8).pow(places as u32);
    let scaled = magnitude * Rational::from_integer(scale.clone());
    let mut units = scaled.trunc().to_integer();
    let frac = &scaled - Rational::from_integer(units.clone());
    // round half away from zero
    if frac * BigInt::from(2u8) >= Rational::one() {
        units += BigInt::one();
    }
    let int_part = &units / &scale;
    let frac_part = &units % &scale;
    let sign = if negative && !units.is_zero() { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0places$}", places = places)
    }
}

/// Renders a rational as `numer/denom` in lowest terms (exact form for logs).
pub fn to_ratio_string(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Parses `numer/denom`, a plain integer, or a decimal like `0.5`.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let trimmed = text.trim();
    if let Some((n, d)) = trimmed.split_once('/') {
        let numer: BigInt = n
            .trim()
            .parse()
            .map_err(|_| format!("bad rational numerator: {n:?}"))?;
        let denom: BigInt = d
            .trim()
            .parse()
            .map_err(|_| format!("bad rational denominator: {d:?}"))?;
        if denom.is_zero() {
            return Err("rational denominator cannot be zero".to_string());
        }
        return Ok(Rational::new(numer, denom));
    }
    if let Some((int, frac)) = trimmed.split_once('.') {
        let digits = frac.len() as u32;
        let int_part: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| format!("bad decimal: {trimmed:?}"))?
        };
        let frac_part: BigInt = frac
            .parse()
            .map_err(|_| format!("bad decimal: {trimmed:?}"))?;
        if frac_part.is_negative() {
            return Err(format!("bad decimal: {trimmed:?}"));
        }
        let scale = BigInt::from(10u8).pow(digits);
        let negative = trimmed.starts_with('-');
        let magnitude =
            Rational::from_integer(int_part.abs()) + Rational::new(frac_part, scale);
        return Ok(if negative { -magnitude } else { magnitude });
    }
    let int: BigInt = trimmed
        .parse()
        .map_err(|_| format!("bad rational: {trimmed:?}"))?;
    Ok(Rational::from_integer(int))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gr(value: i64) -> GlobalReputation {
        GlobalReputation::from_integer(value as u64)
    }

    fn ratio(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Independent oracle: unit-weight simulation of a peer whose every
    /// `m`-th feedback is negative.
    fn simulate_unit(t: u64, m: u64) -> ScoreLedger {
        let mut ledger = new_ledger(ServerId::new("peer"));
        for i in 1..=t {
            let score = if i % m == 0 {
                LocalScore::Negative
            } else {
                LocalScore::Positive
            };
            ledger = apply_feedback(&ledger, score, &GlobalReputation::zero(), WeightMode::Unit);
        }
        ledger
    }

    #[test]
    fn fresh_ledger_is_all_zero() {
        let ledger = new_ledger(ServerId::new("S1"));
        assert_eq!(ledger.transactions(), 0);
        assert!(ledger.pos_accum().is_zero());
        assert!(ledger.neg_accum().is_zero());
        assert_eq!(global_reputation(&ledger), GlobalReputation::zero());
    }

    #[test]
    fn fresh_ledgers_differ_only_by_owner() {
        let a = new_ledger(ServerId::new("S1"));
        let b = new_ledger(ServerId::new("S2"));
        assert_ne!(a.owner(), b.owner());
        assert_eq!(a.transactions(), b.transactions());
        assert_eq!(a.pos_accum(), b.pos_accum());
        assert_eq!(a.neg_accum(), b.neg_accum());
    }

    #[test]
    fn weighted_positive_feedback_lands_in_pos() {
        let ledger = new_ledger(ServerId::new("S1"));
        let next = apply_feedback(
            &ledger,
            LocalScore::Positive,
            &gr(5),
            WeightMode::ReputationWeighted,
        );
        assert_eq!(next.transactions(), 1);
        assert_eq!(next.pos_accum(), &ratio(5, 1));
        assert!(next.neg_accum().is_zero());
    }

    #[test]
    fn zero_weight_scorer_adds_nothing_but_t() {
        let ledger = new_ledger(ServerId::new("S1"));
        let next = apply_feedback(
            &ledger,
            LocalScore::Negative,
            &GlobalReputation::zero(),
            WeightMode::ReputationWeighted,
        );
        assert_eq!(next.transactions(), 1);
        assert!(next.pos_accum().is_zero());
        assert!(next.neg_accum().is_zero());
    }

    #[test]
    fn unit_negative_feedback_increments_neg_by_one() {
        let mut ledger = new_ledger(ServerId::new("S1"));
        for _ in 0..9 {
            ledger = apply_feedback(
                &ledger,
                LocalScore::Positive,
                &GlobalReputation::zero(),
                WeightMode::Unit,
            );
        }
        assert_eq!((ledger.transactions(), ledger.pos_accum().clone()), (9, ratio(9, 1)));
        let next = apply_feedback(&ledger, LocalScore::Negative, &gr(42), WeightMode::Unit);
        assert_eq!(next.transactions(), 10);
        assert_eq!(next.pos_accum(), &ratio(9, 1));
        assert_eq!(next.neg_accum(), &ratio(1, 1));
    }

    #[test]
    fn global_reputation_formula() {
        // (T=10, POS=9, NEG=1) -> 10*9/2 = 45
        let ledger = simulate_unit(10, 10);
        assert_eq!(global_reputation(&ledger).as_rational(), &ratio(45, 1));

        // (T=1, POS=5, NEG=0) -> 5
        let one = apply_feedback(
            &new_ledger(ServerId::new("S1")),
            LocalScore::Positive,
            &gr(5),
            WeightMode::ReputationWeighted,
        );
        assert_eq!(global_reputation(&one).as_rational(), &ratio(5, 1));
    }

    #[test]
    fn unscored_transaction_bumps_t_only() {
        let ledger = simulate_unit(10, 10);
        let next = record_unscored_transaction(&ledger);
        assert_eq!(next.transactions(), 11);
        assert_eq!(next.pos_accum(), ledger.pos_accum());
        assert_eq!(next.neg_accum(), ledger.neg_accum());
    }

    #[test]
    fn closed_form_matches_simulation_oracle() {
        // (t=10, m=10) -> 100*9/20 = 45, same as simulating ten feedbacks.
        let p = FairnessParams::new(10, 10).unwrap();
        assert_eq!(closed_form_gr(&p).as_rational(), &ratio(45, 1));
        assert_eq!(
            closed_form_gr(&p),
            global_reputation(&simulate_unit(10, 10))
        );

        let zero = FairnessParams::new(0, 5).unwrap();
        assert_eq!(closed_form_gr(&zero), GlobalReputation::zero());

        // (t=100, m=10) -> 10000*9/110 = 9000/11 ~ 818.1818
        let p = FairnessParams::new(100, 10).unwrap();
        assert_eq!(closed_form_gr(&p).as_rational(), &ratio(9000, 11));
        assert_eq!(
            closed_form_gr(&p),
            global_reputation(&simulate_unit(100, 10))
        );
    }

    #[test]
    fn fairness_params_reject_degenerate_period() {
        assert!(FairnessParams::new(10, 1).is_err());
        assert!(FairnessParams::new(10, 0).is_err());
        assert!(fairness_threshold(1, &FairnessParams::new(10, 10).unwrap()).is_err());
    }

    #[test]
    fn fairness_threshold_spot_case() {
        // Peer 2: t=100, m=10 -> k = 9000/11 ~ 818.18.
        // Peer 1 at m=20: T=57 gives ~801.7, T=58 gives ~819.4.
        let peer2 = FairnessParams::new(100, 10).unwrap();
        assert_eq!(fairness_threshold(20, &peer2).unwrap(), 58);
        assert_eq!(fairness_threshold_scan(20, &peer2).unwrap(), 58);

        let below = closed_form_gr(&FairnessParams::new(57, 20).unwrap());
        let above = closed_form_gr(&FairnessParams::new(58, 20).unwrap());
        let target = closed_form_gr(&peer2);
        assert!(below <= target);
        assert!(above > target);
    }

    #[test]
    fn fairness_threshold_equal_periods_is_t_plus_one() {
        for (t2, m) in [(0u64, 2u64), (7, 3), (50, 10), (100, 12)] {
            let peer2 = FairnessParams::new(t2, m).unwrap();
            assert_eq!(fairness_threshold(m, &peer2).unwrap(), t2 + 1);
        }
    }

    #[test]
    fn fairness_threshold_beats_zero_immediately() {
        let peer2 = FairnessParams::new(0, 2).unwrap();
        assert_eq!(fairness_threshold(2, &peer2).unwrap(), 1);
    }

    #[test]
    fn scorer_weight_modes() {
        assert_eq!(scorer_weight(&gr(7), WeightMode::Unit), ratio(1, 1));
        assert_eq!(
            scorer_weight(&gr(7), WeightMode::ReputationWeighted),
            ratio(7, 1)
        );
        assert_eq!(
            scorer_weight(&GlobalReputation::zero(), WeightMode::ReputationWeighted),
            ratio(0, 1)
        );
    }

    #[test]
    fn local_score_parsing() {
        assert_eq!(LocalScore::from_value(1).unwrap(), LocalScore::Positive);
        assert_eq!(LocalScore::from_value(-1).unwrap(), LocalScore::Negative);
        assert!(LocalScore::from_value(0).is_err());
        assert!(LocalScore::from_value(2).is_err());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal_string(&ratio(9000, 11), 6), "818.181818");
        assert_eq!(to_decimal_string(&ratio(45, 1), 6), "45.000000");
        assert_eq!(to_decimal_string(&ratio(0, 1), 6), "0.000000");
        assert_eq!(to_decimal_string(&ratio(1, 2), 0), "1");
        assert_eq!(to_decimal_string(&ratio(1, 3), 3), "0.333");
        assert_eq!(to_decimal_string(&ratio(2, 3), 3), "0.667");
        assert_eq!(to_decimal_string(&ratio(-1, 2), 2), "-0.50");
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/2").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("3").unwrap(), ratio(3, 1));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), ratio(-3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_ledger() -> impl Strategy<Value = ScoreLedger> {
            (0u64..50, proptest::collection::vec((any::<bool>(), 0u64..20), 0..30)).prop_map(
                |(_, events)| {
                    let mut ledger = new_ledger(ServerId::new("p"));
                    for (positive, weight) in events {
                        let score = if positive {
                            LocalScore::Positive
                        } else {
                            LocalScore::Negative
                        };
                        ledger = apply_feedback(
                            &ledger,
                            score,
                            &GlobalReputation::from_integer(weight),
                            WeightMode::ReputationWeighted,
                        );
                    }
                    ledger
                },
            )
        }

        proptest! {
            #[test]
            fn reputation_is_non_negative(ledger in arb_ledger()) {
                let gr = global_reputation(&ledger);
                prop_assert!(!gr.as_rational().is_negative());
            }

            #[test]
            fn positive_feedback_with_weight_strictly_raises_gr(
                ledger in arb_ledger(),
                weight in 1u64..100,
            ) {
                let before = global_reputation(&ledger);
                let after = global_reputation(&apply_feedback(
                    &ledger,
                    LocalScore::Positive,
                    &GlobalReputation::from_integer(weight),
                    WeightMode::ReputationWeighted,
                ));
                prop_assert!(after > before);
            }

            #[test]
            fn zero_weight_negative_never_lowers_gr(ledger in arb_ledger()) {
                let before = global_reputation(&ledger);
                let after = global_reputation(&apply_feedback(
                    &ledger,
                    LocalScore::Negative,
                    &GlobalReputation::zero(),
                    WeightMode::ReputationWeighted,
                ));
                prop_assert!(after >= before);
            }

            #[test]
            fn accumulators_never_shrink(
                ledger in arb_ledger(),
                positive in any::<bool>(),
                weight in 0u64..50,
            ) {
                let score = if positive { LocalScore::Positive } else { LocalScore::Negative };
                let after = apply_feedback(
                    &ledger,
                    score,
                    &GlobalReputation::from_integer(weight),
                    WeightMode::ReputationWeighted,
                );
                prop_assert!(after.pos_accum() >= ledger.pos_accum());
                prop_assert!(after.neg_accum() >= ledger.neg_accum());
                prop_assert_eq!(after.transactions(), ledger.transactions() + 1);
            }

            #[test]
            fn apply_feedback_is_pure(
                ledger in arb_ledger(),
                positive in any::<bool>(),
                weight in 0u64..50,
            ) {
                let score = if positive { LocalScore::Positive } else { LocalScore::Negative };
                let rep = GlobalReputation::from_integer(weight);
                let a = apply_feedback(&ledger, score, &rep, WeightMode::ReputationWeighted);
                let b = apply_feedback(&ledger, score, &rep, WeightMode::ReputationWeighted);
                prop_assert_eq!(a, b);
            }

            #[test]
            fn unit_simulation_matches_closed_form_at_period_boundaries(
                m in 2u64..=12,
                blocks in 0u64..=16,
            ) {
                let t = m * blocks;
                let params = FairnessParams::new(t, m).unwrap();
                let simulated = global_reputation(&simulate_unit(t, m));
                prop_assert_eq!(closed_form_gr(&params), simulated);
            }

            #[test]
            fn unit_simulation_matches_discrete_formula_everywhere(
                m in 2u64..=12,
                t in 0u64..=200,
            ) {
                // At every prefix, NEG = floor(t/m) and POS = t - NEG, so
                // GR = t * (t - floor(t/m)) / (floor(t/m) + 1).
                let negatives = t / m;
                let expected = Rational::new(
                    BigInt::from(t) * BigInt::from(t - negatives),
                    BigInt::from(negatives + 1),
                );
                let simulated = global_reputation(&simulate_unit(t, m));
                prop_assert_eq!(simulated.as_rational(), &expected);
            }

            #[test]
            fn analytic_threshold_matches_scan(
                m1 in 2u64..=12,
                m2 in 2u64..=12,
                t2 in 0u64..=120,
            ) {
                let peer2 = FairnessParams::new(t2, m2).unwrap();
                prop_assert_eq!(
                    fairness_threshold(m1, &peer2).unwrap(),
                    fairness_threshold_scan(m1, &peer2).unwrap()
                );
            }
        }
    }
}
