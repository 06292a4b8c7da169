//! One-step kernels for the four shuffling Markov chains, plus the literal
//! RC4 key-scheduling loop.
//!
//! A deck is an array mapping position to card label, position 0 on top.
//! Every step is split into a *draw* (consume randomness, produce a
//! [`StepTrace`]) and an *apply* (mutate the deck). Stopping rules observe
//! the trace together with the deck as it was before the swap, which is why
//! the two halves are public.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::BitSource;

/// A deck of `n` distinct card labels; `deck[p]` is the card at position `p`
/// and position 0 is the top. The bijection invariant is checked on
/// construction and, in debug/test builds, after every step.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Permutation {
    deck: Vec<u32>,
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({:?})", self.deck)
    }
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { deck: (0..n as u32).collect() }
    }

    /// Build from an explicit deck, checking the bijection invariant.
    /// Decks hold at least one card.
    pub fn from_deck(deck: Vec<u32>) -> Result<Self> {
        let n = deck.len();
        if n == 0 {
            return Err(Error::InvalidDeck { n });
        }
        let mut seen = vec![false; n];
        for &card in &deck {
            match seen.get_mut(card as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::InvalidDeck { n }),
            }
        }
        Ok(Permutation { deck })
    }

    pub fn n(&self) -> usize {
        self.deck.len()
    }

    pub fn card_at(&self, pos: usize) -> u32 {
        self.deck[pos]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.deck
    }

    pub fn is_identity(&self) -> bool {
        self.deck.iter().enumerate().all(|(p, &c)| c as usize == p)
    }

    /// Position of each card: `inverse()[card] = position`.
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.deck.len()];
        for (pos, &card) in self.deck.iter().enumerate() {
            inv[card as usize] = pos as u32;
        }
        Permutation { deck: inv }
    }

    /// +1 for even permutations, -1 for odd, via cycle counting.
    pub fn sign(&self) -> i8 {
        let n = self.deck.len();
        let mut seen = vec![false; n];
        let mut transpositions = 0usize;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0usize;
            let mut p = start;
            while !seen[p] {
                seen[p] = true;
                p = self.deck[p] as usize;
                len += 1;
            }
            transpositions += len - 1;
        }
        if transpositions % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Whitespace-separated card labels, one deck per line.
    pub fn to_line(&self) -> String {
        let labels: Vec<String> = self.deck.iter().map(u32::to_string).collect();
        labels.join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let deck: Vec<u32> = line
            .split_whitespace()
            .map(|tok| tok.parse::<u32>().map_err(|_| Error::InvalidDeck { n: 0 }))
            .collect::<Result<_>>()?;
        Permutation::from_deck(deck)
    }

    fn debug_check(&self) {
        #[cfg(debug_assertions)]
        {
            let mut seen = vec![false; self.deck.len()];
            for &card in &self.deck {
                assert!(
                    (card as usize) < self.deck.len() && !seen[card as usize],
                    "deck lost the bijection invariant: {:?}",
                    self.deck
                );
                seen[card as usize] = true;
            }
        }
    }
}

impl From<Permutation> for Vec<u32> {
    fn from(p: Permutation) -> Vec<u32> {
        p.deck
    }
}

impl TryFrom<Vec<u32>> for Permutation {
    type Error = Error;
    fn try_from(deck: Vec<u32>) -> Result<Self> {
        Permutation::from_deck(deck)
    }
}

/// The four chains.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleKind {
    /// Move the top card to a uniform position.
    TopToRandom,
    /// Swap the cards at two independent uniform positions.
    RandomTranspositions,
    /// Swap the card at the cyclically advancing position with a uniform one.
    CyclicToRandom,
    /// Assign each card a bit; stably move the 0-bit cards to the top.
    RiffleInverse,
}

impl ShuffleKind {
    pub const ALL: [ShuffleKind; 4] = [
        ShuffleKind::TopToRandom,
        ShuffleKind::RandomTranspositions,
        ShuffleKind::CyclicToRandom,
        ShuffleKind::RiffleInverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShuffleKind::TopToRandom => "top-to-random",
            ShuffleKind::RandomTranspositions => "random-transpositions",
            ShuffleKind::CyclicToRandom => "cyclic-to-random",
            ShuffleKind::RiffleInverse => "riffle-inverse",
        }
    }
}

impl fmt::Display for ShuffleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShuffleKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "top-to-random" | "t2r" => Ok(ShuffleKind::TopToRandom),
            "random-transpositions" | "rtrt" => Ok(ShuffleKind::RandomTranspositions),
            "cyclic-to-random" | "ctrt" => Ok(ShuffleKind::CyclicToRandom),
            "riffle-inverse" | "riffle" => Ok(ShuffleKind::RiffleInverse),
            other => Err(format!(
                "unknown shuffle kind {other:?} (expected top-to-random, \
                 random-transpositions, cyclic-to-random or riffle-inverse)"
            )),
        }
    }
}

/// The randomness one step used, in the shape the stopping rules consume.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StepData {
    /// Top card inserted at position `j` (top-to-random).
    Insert { j: usize },
    /// Cards at positions `i` and `j` swapped (transposition chains).
    Transpose { i: usize, j: usize },
    /// One bit per position, top to bottom (inverse riffle).
    Riffle { bits: Vec<bool> },
}

/// A fully described step: which chain, which round, and what randomness.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StepTrace {
    pub kind: ShuffleKind,
    pub round: u64,
    pub data: StepData,
}

impl StepTrace {
    pub fn insert(round: u64, j: usize) -> Self {
        StepTrace { kind: ShuffleKind::TopToRandom, round, data: StepData::Insert { j } }
    }

    pub fn transpose(kind: ShuffleKind, round: u64, i: usize, j: usize) -> Self {
        StepTrace { kind, round, data: StepData::Transpose { i, j } }
    }

    pub fn riffle(round: u64, bits: Vec<bool>) -> Self {
        StepTrace { kind: ShuffleKind::RiffleInverse, round, data: StepData::Riffle { bits } }
    }
}

/// Draw one step's randomness without touching any deck.
///
/// Bits consumed per step for power-of-two `n`: `lg n` (top-to-random),
/// `2 lg n` (random transpositions), `lg n` (cyclic-to-random, the cyclic
/// index is free), `n` (inverse riffle). Non-power-of-two `n` additionally
/// burns rejected chunks.
pub fn draw_step(
    kind: ShuffleKind,
    n: usize,
    round: u64,
    src: &mut dyn BitSource,
) -> Result<StepTrace> {
    let mut trace = StepTrace { kind, round, data: StepData::Insert { j: 0 } };
    draw_step_into(&mut trace, kind, n, round, src)?;
    Ok(trace)
}

/// Like [`draw_step`] but reuses `trace`'s allocation (the riffle bit vector)
/// so sampling loops stay allocation-free.
pub fn draw_step_into(
    trace: &mut StepTrace,
    kind: ShuffleKind,
    n: usize,
    round: u64,
    src: &mut dyn BitSource,
) -> Result<()> {
    trace.kind = kind;
    trace.round = round;
    match kind {
        ShuffleKind::TopToRandom => {
            trace.data = StepData::Insert { j: src.uniform_index(n)? };
        }
        ShuffleKind::RandomTranspositions => {
            let i = src.uniform_index(n)?;
            let j = src.uniform_index(n)?;
            trace.data = StepData::Transpose { i, j };
        }
        ShuffleKind::CyclicToRandom => {
            let i = (round % n as u64) as usize;
            let j = src.uniform_index(n)?;
            trace.data = StepData::Transpose { i, j };
        }
        ShuffleKind::RiffleInverse => {
            let bits = match &mut trace.data {
                StepData::Riffle { bits } => {
                    bits.clear();
                    std::mem::take(bits)
                }
                _ => Vec::with_capacity(n),
            };
            let mut bits = bits;
            for _ in 0..n {
                bits.push(src.next_bit()?);
            }
            trace.data = StepData::Riffle { bits };
        }
    }
    Ok(())
}

/// Apply a drawn step to a deck.
pub fn apply_trace(s: &mut Permutation, trace: &StepTrace) -> Result<()> {
    let mut scratch = Vec::new();
    apply_trace_with_scratch(s, trace, &mut scratch)
}

/// Like [`apply_trace`] but reuses `scratch` for the riffle's stable
/// partition, keeping hot loops allocation-free after the first step.
pub fn apply_trace_with_scratch(
    s: &mut Permutation,
    trace: &StepTrace,
    scratch: &mut Vec<u32>,
) -> Result<()> {
    let n = s.deck.len();
    match &trace.data {
        StepData::Insert { j } => {
            if *j >= n {
                return Err(Error::InvalidTrace(format!("insert position {j} >= n = {n}")));
            }
            s.deck[..=*j].rotate_left(1);
        }
        StepData::Transpose { i, j } => {
            if *i >= n || *j >= n {
                return Err(Error::InvalidTrace(format!(
                    "transposition ({i}, {j}) out of range for n = {n}"
                )));
            }
            s.deck.swap(*i, *j);
        }
        StepData::Riffle { bits } => {
            if bits.len() != n {
                return Err(Error::InvalidTrace(format!(
                    "riffle bit vector has {} bits, deck has {n}",
                    bits.len()
                )));
            }
            scratch.clear();
            scratch.extend(
                bits.iter().zip(&s.deck).filter(|(&b, _)| !b).map(|(_, &card)| card),
            );
            scratch.extend(
                bits.iter().zip(&s.deck).filter(|(&b, _)| b).map(|(_, &card)| card),
            );
            s.deck.copy_from_slice(scratch);
        }
    }
    s.debug_check();
    Ok(())
}

/// Top-to-random: draw, apply, return the trace.
pub fn step_t2r(s: &mut Permutation, round: u64, src: &mut dyn BitSource) -> Result<StepTrace> {
    let trace = draw_step(ShuffleKind::TopToRandom, s.n(), round, src)?;
    apply_trace(s, &trace)?;
    Ok(trace)
}

/// Random-to-random transpositions: draw, apply, return the trace.
pub fn step_rtrt(s: &mut Permutation, round: u64, src: &mut dyn BitSource) -> Result<StepTrace> {
    let trace = draw_step(ShuffleKind::RandomTranspositions, s.n(), round, src)?;
    apply_trace(s, &trace)?;
    Ok(trace)
}

/// Cyclic-to-random: position `round mod n` swaps with a uniform position.
pub fn step_ctrt(s: &mut Permutation, round: u64, src: &mut dyn BitSource) -> Result<StepTrace> {
    let trace = draw_step(ShuffleKind::CyclicToRandom, s.n(), round, src)?;
    apply_trace(s, &trace)?;
    Ok(trace)
}

/// Time-reversed riffle: one bit per card, 0-bit cards rise stably.
pub fn step_riffle_inverse(
    s: &mut Permutation,
    round: u64,
    src: &mut dyn BitSource,
) -> Result<StepTrace> {
    let trace = draw_step(ShuffleKind::RiffleInverse, s.n(), round, src)?;
    apply_trace(s, &trace)?;
    Ok(trace)
}

/// The literal RC4 key-scheduling loop: `j := j + S[i] + K[i mod l]` with all
/// arithmetic mod `n`, the key cycling as in the original cipher.
pub fn rc4_ksa(key: &[u8], n: usize) -> Permutation {
    assert!(n >= 1, "rc4_ksa requires n >= 1");
    assert!(!key.is_empty(), "rc4_ksa requires a non-empty key");
    let mut s = Permutation::identity(n);
    let mut j = 0usize;
    for i in 0..n {
        j = (j + s.deck[i] as usize + key[i % key.len()] as usize) % n;
        s.deck.swap(i, j);
    }
    s.debug_check();
    s
}
