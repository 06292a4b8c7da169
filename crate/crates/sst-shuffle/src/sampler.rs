//! Sampling drivers: fixed-step runs (idealized key scheduling), run-until-
//! stopped runs (perfect sampling), and key-driven permutation generation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{BitSource, KeyStream, StreamLabel};
use crate::shuffles::{apply_trace_with_scratch, draw_step_into, Permutation, ShuffleKind, StepData, StepTrace};
use crate::sst_rules::RuleKind;

/// Why a sampling run ended.
///
/// `KeyExhausted` is reserved for drivers that return partial results; the
/// drivers in this module fail with [`Error::KeyExhausted`] instead of
/// returning a deck that never reached its stopping condition.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCause {
    FixedSteps,
    SstRule,
    KeyExhausted,
}

/// Outcome of a sampling run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    pub deck: Permutation,
    /// Shuffle steps applied.
    pub steps: u64,
    /// Raw bits drawn, including rejected chunks.
    pub bits_used: u64,
    pub stopped_by: StopCause,
    /// Step count at which the stopping rule fired, when one was running.
    /// Equals `steps` unless `min_steps` padding added extra shuffles.
    pub rule_stopped_at: Option<u64>,
}

/// Optional limits for [`ksa_double_star_with`].
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Fail with [`Error::CapExceeded`] if the rule has not fired after this
    /// many steps.
    pub max_steps: Option<u64>,
    /// After the rule fires, keep shuffling until at least this many steps
    /// have been applied (masks the duration; extra steps preserve
    /// uniformity). Off by default.
    pub min_steps: Option<u64>,
}

/// Run exactly `steps` shuffle steps from the identity deck.
pub fn ksa_star(
    kind: ShuffleKind,
    n: usize,
    steps: u64,
    src: &mut dyn BitSource,
) -> Result<SampleResult> {
    let start_bits = src.consumed();
    let mut deck = Permutation::identity(n);
    let mut trace = StepTrace { kind, round: 0, data: StepData::Insert { j: 0 } };
    let mut scratch: Vec<u32> = Vec::new();
    for round in 0..steps {
        draw_step_into(&mut trace, kind, n, round, src)?;
        apply_trace_with_scratch(&mut deck, &trace, &mut scratch)?;
    }
    Ok(SampleResult {
        deck,
        steps,
        bits_used: src.consumed() - start_bits,
        stopped_by: StopCause::FixedSteps,
        rule_stopped_at: None,
    })
}

/// Run from the identity deck until the stopping rule fires.
///
/// The rule observes each step (pre-swap deck plus randomness) and the step
/// is applied regardless; when the rule fires at step T the returned deck is
/// an exact uniform sample and T is independent of it.
pub fn ksa_double_star(
    kind: ShuffleKind,
    n: usize,
    rule: RuleKind,
    src: &mut dyn BitSource,
    max_steps: Option<u64>,
) -> Result<SampleResult> {
    ksa_double_star_with(kind, n, rule, src, &SamplerOptions { max_steps, min_steps: None })
}

/// [`ksa_double_star`] with the full option set.
pub fn ksa_double_star_with(
    kind: ShuffleKind,
    n: usize,
    rule: RuleKind,
    src: &mut dyn BitSource,
    opts: &SamplerOptions,
) -> Result<SampleResult> {
    if !rule.valid_for(kind) {
        return Err(Error::InvalidPairing { kind, rule });
    }
    let start_bits = src.consumed();
    let mut deck = Permutation::identity(n);
    let mut state = rule.new_state(&deck);
    let mut trace = StepTrace { kind, round: 0, data: StepData::Insert { j: 0 } };
    let mut scratch: Vec<u32> = Vec::new();
    let mut steps = 0u64;
    while !state.has_stopped() {
        if let Some(cap) = opts.max_steps {
            if steps >= cap {
                return Err(Error::CapExceeded { max_steps: cap });
            }
        }
        draw_step_into(&mut trace, kind, n, steps, src)?;
        state.update(&deck, &trace)?;
        apply_trace_with_scratch(&mut deck, &trace, &mut scratch)?;
        steps += 1;
    }
    let rule_stopped_at = steps;
    while steps < opts.min_steps.unwrap_or(0) {
        draw_step_into(&mut trace, kind, n, steps, src)?;
        apply_trace_with_scratch(&mut deck, &trace, &mut scratch)?;
        steps += 1;
    }
    Ok(SampleResult {
        deck,
        steps,
        bits_used: src.consumed() - start_bits,
        stopped_by: StopCause::SstRule,
        rule_stopped_at: Some(rule_stopped_at),
    })
}

/// Named shuffle/rule pairings for key-driven generation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    RiffleSst,
    CtrtKlz,
    RtrtKlz,
    T2r,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::RiffleSst, Scheme::CtrtKlz, Scheme::RtrtKlz, Scheme::T2r];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::RiffleSst => "riffle-sst",
            Scheme::CtrtKlz => "ctrt-klz",
            Scheme::RtrtKlz => "rtrt-klz",
            Scheme::T2r => "t2r",
        }
    }

    pub fn pairing(self) -> (ShuffleKind, RuleKind) {
        match self {
            Scheme::RiffleSst => (ShuffleKind::RiffleInverse, RuleKind::PairSeparation),
            Scheme::CtrtKlz => (ShuffleKind::CyclicToRandom, RuleKind::KlzMark),
            Scheme::RtrtKlz => (ShuffleKind::RandomTranspositions, RuleKind::KlzMark),
            Scheme::T2r => (ShuffleKind::TopToRandom, RuleKind::BottomCardTracker),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "riffle-sst" => Ok(Scheme::RiffleSst),
            "ctrt-klz" => Ok(Scheme::CtrtKlz),
            "rtrt-klz" => Ok(Scheme::RtrtKlz),
            "t2r" => Ok(Scheme::T2r),
            other => Err(format!(
                "unknown scheme {other:?} (expected riffle-sst, ctrt-klz, rtrt-klz or t2r)"
            )),
        }
    }
}

/// Deterministically generate a uniform permutation from a key: expand the
/// key into a bit stream and run [`ksa_double_star`]. Same `(n, key, scheme)`
/// always yields the same result; the step count depends on the key alone,
/// never on any plaintext.
pub fn generate_permutation(n: usize, key: &[u8], scheme: Scheme) -> Result<SampleResult> {
    let (kind, rule) = scheme.pairing();
    let mut src = KeyStream::new(key, StreamLabel::Generic);
    ksa_double_star(kind, n, rule, &mut src, None)
}
