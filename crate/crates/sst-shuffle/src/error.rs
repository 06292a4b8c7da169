use crate::shuffles::ShuffleKind;
use crate::sst_rules::RuleKind;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A finite bit source ran out of bits.
    #[error("bit source exhausted after {consumed} bits")]
    KeyExhausted { consumed: u64 },

    /// A recorded tape contained something other than '0', '1' or whitespace.
    #[error("invalid tape character {found:?} at offset {offset}")]
    InvalidTapeChar { found: char, offset: usize },

    /// A deck failed the bijection check.
    #[error("deck of length {n} is not a permutation of 0..{n}")]
    InvalidDeck { n: usize },

    /// A step trace does not fit the deck it was applied to.
    #[error("step trace does not match deck: {0}")]
    InvalidTrace(String),

    /// A stopping rule was fed a step from a chain it cannot observe.
    #[error("{rule} cannot observe {kind} steps")]
    KindMismatch { rule: RuleKind, kind: ShuffleKind },

    /// The requested rule is not a valid strong stationary time for the chain.
    #[error("{rule} is not a strong stationary time for {kind}")]
    InvalidPairing { kind: ShuffleKind, rule: RuleKind },

    /// A capped sampler run hit its step limit before the rule stopped.
    #[error("stopping rule did not fire within {max_steps} steps")]
    CapExceeded { max_steps: u64 },

    /// Round budgeting requires 0 < epsilon < 1/n!.
    #[error("epsilon {epsilon} outside (0, 1/{n}!) for n = {n}")]
    EpsilonOutOfRange { n: u64, epsilon: f64 },

    /// Exact enumeration is limited to small decks.
    #[error("exact computation supports n <= {max}, got n = {n}")]
    SizeTooLarge { n: usize, max: usize },

    /// A size (buffer bytes, or a permutation's bit width) does not match
    /// what the operation needs.
    #[error("size mismatch: got {got}, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },

    /// Bit permutations operate on whole-byte, power-of-two block sizes.
    #[error("unsupported block size {n_bits} bits (want a power of two in 8..=1024)")]
    BlockSizeUnsupported { n_bits: usize },

    /// The riffle bit-budget row needs n to be a power of two.
    #[error("n = {n} is not a power of two")]
    PowerOfTwoRequired { n: usize },

    /// Simulation configuration failed validation.
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
