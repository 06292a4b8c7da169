//! Strong stationary time stopping rules.
//!
//! Each rule watches a chain's steps — the deck *before* the swap plus the
//! step's randomness — and reports when the deck's law is exactly uniform.
//! The rules never drive the chain; the sampler applies every observed step,
//! and the stopping time T is the number of applied steps when the rule
//! fires.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shuffles::{Permutation, ShuffleKind, StepData, StepTrace};

/// Rule selector used by the sampler's pairing table and error reporting.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    BottomCardTracker,
    CheckedSet,
    KlzMark,
    PairSeparation,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [
        RuleKind::BottomCardTracker,
        RuleKind::CheckedSet,
        RuleKind::KlzMark,
        RuleKind::PairSeparation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::BottomCardTracker => "bottom-card-tracker",
            RuleKind::CheckedSet => "checked-set",
            RuleKind::KlzMark => "klz-mark",
            RuleKind::PairSeparation => "pair-separation",
        }
    }

    /// The pairing table: which chains each rule is a proven strong
    /// stationary time for.
    pub fn valid_for(self, kind: ShuffleKind) -> bool {
        matches!(
            (self, kind),
            (RuleKind::BottomCardTracker, ShuffleKind::TopToRandom)
                | (RuleKind::CheckedSet, ShuffleKind::RandomTranspositions)
                | (RuleKind::CheckedSet, ShuffleKind::CyclicToRandom)
                | (RuleKind::KlzMark, ShuffleKind::RandomTranspositions)
                | (RuleKind::KlzMark, ShuffleKind::CyclicToRandom)
                | (RuleKind::PairSeparation, ShuffleKind::RiffleInverse)
        )
    }

    /// Fresh rule state for a chain starting from `initial`.
    pub fn new_state(self, initial: &Permutation) -> RuleState {
        match self {
            RuleKind::BottomCardTracker => RuleState::Tracker(BottomCardTracker::new(initial)),
            RuleKind::CheckedSet => RuleState::Checked(CheckedSet::new(initial.n())),
            RuleKind::KlzMark => RuleState::Klz(KlzMarkState::new(initial.n())),
            RuleKind::PairSeparation => {
                RuleState::Pairs(PairSeparationState::new(initial.n()))
            }
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bottom-card-tracker" | "tracker" => Ok(RuleKind::BottomCardTracker),
            "checked-set" | "mironov" => Ok(RuleKind::CheckedSet),
            "klz-mark" | "klz" => Ok(RuleKind::KlzMark),
            "pair-separation" | "pairs" => Ok(RuleKind::PairSeparation),
            other => Err(format!(
                "unknown stopping rule {other:?} (expected bottom-card-tracker, \
                 checked-set, klz-mark or pair-separation)"
            )),
        }
    }
}

fn check_kind(rule: RuleKind, trace: &StepTrace) -> Result<()> {
    if rule.valid_for(trace.kind) {
        Ok(())
    } else {
        Err(Error::KindMismatch { rule, kind: trace.kind })
    }
}

fn transpose_indices(rule: RuleKind, trace: &StepTrace) -> Result<(usize, usize)> {
    check_kind(rule, trace)?;
    match trace.data {
        StepData::Transpose { i, j } => Ok((i, j)),
        _ => Err(Error::KindMismatch { rule, kind: trace.kind }),
    }
}

/// Broder's rule for top-to-random: wait until the card that started at the
/// bottom is on top, then the very step that inserts it back stops the clock.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BottomCardTracker {
    bottom_label: u32,
    reached_top_at: Option<u64>,
    stopped: bool,
    rounds: u64,
}

impl BottomCardTracker {
    pub fn new(initial: &Permutation) -> Self {
        BottomCardTracker {
            bottom_label: initial.card_at(initial.n() - 1),
            reached_top_at: None,
            stopped: false,
            rounds: 0,
        }
    }

    pub fn bottom_label(&self) -> u32 {
        self.bottom_label
    }

    /// Round at which the tracked card first sat on top (set when stopped;
    /// stopping always happens exactly one round later).
    pub fn reached_top_at(&self) -> Option<u64> {
        self.reached_top_at
    }

    pub fn has_stopped(&self) -> bool {
        self.stopped
    }

    pub fn update(&mut self, deck_before: &Permutation, trace: &StepTrace) -> Result<bool> {
        check_kind(RuleKind::BottomCardTracker, trace)?;
        if !matches!(trace.data, StepData::Insert { .. }) {
            return Err(Error::KindMismatch {
                rule: RuleKind::BottomCardTracker,
                kind: trace.kind,
            });
        }
        if self.stopped {
            return Ok(true);
        }
        self.rounds += 1;
        if deck_before.card_at(0) == self.bottom_label {
            // The tracked card is on top; this step inserts it uniformly.
            self.reached_top_at = Some(self.rounds - 1);
            self.stopped = true;
        }
        Ok(self.stopped)
    }
}

/// Mironov's rule for the transposition chains: a card becomes checked when
/// it self-swaps (i = j) or swaps with an already-checked card; card n-1
/// starts checked. Both reads happen before the swap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CheckedSet {
    checked: Vec<bool>,
    count: usize,
}

impl CheckedSet {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut checked = vec![false; n];
        checked[n - 1] = true;
        CheckedSet { checked, count: 1 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_checked(&self, card: u32) -> bool {
        self.checked[card as usize]
    }

    pub fn has_stopped(&self) -> bool {
        self.count == self.checked.len()
    }

    pub fn update(&mut self, deck_before: &Permutation, trace: &StepTrace) -> Result<bool> {
        let (i, j) = transpose_indices(RuleKind::CheckedSet, trace)?;
        if self.has_stopped() {
            return Ok(true);
        }
        let si = deck_before.card_at(i) as usize;
        let sj = deck_before.card_at(j) as usize;
        if !self.checked[si] && (i == j || self.checked[sj]) {
            self.checked[si] = true;
            self.count += 1;
        }
        Ok(self.has_stopped())
    }
}

/// The two-phase marking rule for the transposition chains. Phase 1 (fewer
/// than `d = ceil((n-1)/2)` marks): mark the card at the cyclic/first
/// position if both observed cards are unmarked. Phase 2: mark it if the
/// other card is marked or the step is a self-swap. Reads happen before the
/// swap; `r` is the trace's first index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KlzMarkState {
    marked: Vec<bool>,
    count: usize,
    d: usize,
}

impl KlzMarkState {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        KlzMarkState { marked: vec![false; n], count: 0, d: (n - 1).div_ceil(2) }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Phase-switch threshold `d = ceil((n-1)/2)`.
    pub fn threshold(&self) -> usize {
        self.d
    }

    /// 1 while `count < d`, then 2.
    pub fn phase(&self) -> u8 {
        if self.count < self.d {
            1
        } else {
            2
        }
    }

    pub fn is_marked(&self, card: u32) -> bool {
        self.marked[card as usize]
    }

    pub fn has_stopped(&self) -> bool {
        self.count == self.marked.len()
    }

    pub fn update(&mut self, deck_before: &Permutation, trace: &StepTrace) -> Result<bool> {
        let (r, j) = transpose_indices(RuleKind::KlzMark, trace)?;
        if self.has_stopped() {
            return Ok(true);
        }
        let pr = deck_before.card_at(r) as usize;
        let pj = deck_before.card_at(j) as usize;
        let fire = if self.count < self.d {
            !self.marked[pr] && !self.marked[pj]
        } else {
            !self.marked[pr] && (self.marked[pj] || r == j)
        };
        if fire {
            self.marked[pr] = true;
            self.count += 1;
        }
        Ok(self.has_stopped())
    }
}

/// Pair-separation rule for the inverse riffle: cards that have received an
/// identical bit history are still "together"; the rule stops when every
/// pair has been separated by some round's bits.
///
/// Cards sharing a bit history are always contiguous in the deck (the stable
/// partition keeps them adjacent and in order), so the state is stored as the
/// ordered sizes of those contiguous blocks instead of an n x n pair matrix.
/// Refining by a new bit vector needs only the bits, not the deck.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairSeparationState {
    /// Sizes of the contiguous same-history blocks, top to bottom; sums to n.
    block_sizes: Vec<u32>,
    n: usize,
}

impl PairSeparationState {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        PairSeparationState { block_sizes: vec![n as u32], n }
    }

    pub fn blocks_remaining(&self) -> usize {
        self.block_sizes.len()
    }

    /// Block sizes in deck order.
    pub fn block_sizes(&self) -> &[u32] {
        &self.block_sizes
    }

    /// Number of card pairs not yet separated.
    pub fn unseparated_pairs(&self) -> u64 {
        self.block_sizes.iter().map(|&s| (s as u64) * (s as u64 - 1) / 2).sum()
    }

    pub fn has_stopped(&self) -> bool {
        self.block_sizes.len() == self.n
    }

    pub fn update(&mut self, trace: &StepTrace) -> Result<bool> {
        check_kind(RuleKind::PairSeparation, trace)?;
        let bits = match &trace.data {
            StepData::Riffle { bits } => bits,
            _ => {
                return Err(Error::KindMismatch {
                    rule: RuleKind::PairSeparation,
                    kind: trace.kind,
                })
            }
        };
        if bits.len() != self.n {
            return Err(Error::InvalidTrace(format!(
                "riffle bit vector has {} bits, rule expects {}",
                bits.len(),
                self.n
            )));
        }
        if self.has_stopped() {
            return Ok(true);
        }
        // Each block splits into its 0-subset and 1-subset; the step then
        // stacks every block's 0-subset (in block order) above every
        // 1-subset, so the refined blocks stay contiguous.
        let mut zeros = Vec::with_capacity(self.block_sizes.len());
        let mut ones = Vec::with_capacity(self.block_sizes.len());
        let mut start = 0usize;
        for &size in &self.block_sizes {
            let size = size as usize;
            let z = bits[start..start + size].iter().filter(|&&b| !b).count();
            if z > 0 {
                zeros.push(z as u32);
            }
            if size - z > 0 {
                ones.push((size - z) as u32);
            }
            start += size;
        }
        zeros.extend_from_slice(&ones);
        self.block_sizes = zeros;
        Ok(self.has_stopped())
    }
}

/// Uniform wrapper over the four rule states: one type the sampler and the
/// exact dynamic programs can clone, hash and compare.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RuleState {
    Tracker(BottomCardTracker),
    Checked(CheckedSet),
    Klz(KlzMarkState),
    Pairs(PairSeparationState),
}

impl RuleState {
    pub fn kind(&self) -> RuleKind {
        match self {
            RuleState::Tracker(_) => RuleKind::BottomCardTracker,
            RuleState::Checked(_) => RuleKind::CheckedSet,
            RuleState::Klz(_) => RuleKind::KlzMark,
            RuleState::Pairs(_) => RuleKind::PairSeparation,
        }
    }

    pub fn has_stopped(&self) -> bool {
        match self {
            RuleState::Tracker(s) => s.has_stopped(),
            RuleState::Checked(s) => s.has_stopped(),
            RuleState::Klz(s) => s.has_stopped(),
            RuleState::Pairs(s) => s.has_stopped(),
        }
    }

    /// Observe one step (pre-swap deck plus trace); returns whether the rule
    /// has stopped after this step.
    pub fn update(&mut self, deck_before: &Permutation, trace: &StepTrace) -> Result<bool> {
        match self {
            RuleState::Tracker(s) => s.update(deck_before, trace),
            RuleState::Checked(s) => s.update(deck_before, trace),
            RuleState::Klz(s) => s.update(deck_before, trace),
            RuleState::Pairs(s) => s.update(trace),
        }
    }
}

/// Free-function spellings of the rule updates.
pub fn t2r_update(
    state: &mut BottomCardTracker,
    trace: &StepTrace,
    deck_before: &Permutation,
) -> Result<bool> {
    state.update(deck_before, trace)
}

pub fn mironov_update(
    state: &mut CheckedSet,
    trace: &StepTrace,
    deck_before: &Permutation,
) -> Result<bool> {
    state.update(deck_before, trace)
}

pub fn klz_update(
    state: &mut KlzMarkState,
    trace: &StepTrace,
    deck_before: &Permutation,
) -> Result<bool> {
    state.update(deck_before, trace)
}

pub fn riffle_update(state: &mut PairSeparationState, trace: &StepTrace) -> Result<bool> {
    state.update(trace)
}
