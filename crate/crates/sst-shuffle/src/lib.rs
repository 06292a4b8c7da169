//! Card-shuffle Markov chains with strong stationary time (SST) stopping
//! rules, exact small-deck oracles, a deterministic Monte-Carlo harness, and
//! a bit-masking layer built on perfectly shuffled decks.
//!
//! The central object is the run-until-stopped sampler: drive a shuffle
//! chain while a stopping rule watches the randomness, and the deck at the
//! stopping time is *exactly* uniform and independent of how long the run
//! took. Everything else here either proves that claim on small decks
//! (exact dynamic programs), measures it at scale (simulation), prices it
//! (random-bit budgets and closed-form expectations), or spends it
//! (deriving masking permutations from a key).
//!
//! With the default `parallel` feature, simulation batches run on a rayon
//! pool; outputs are byte-identical to the sequential fallback.

pub mod analysis;
pub mod error;
pub mod masking;
pub mod randomness;
pub mod sampler;
pub mod shuffles;
pub mod simulate;
pub mod sst_rules;

pub use error::{Error, Result};
pub use randomness::{bits_for, BitSource, KeyStream, RandomBits, StreamLabel, TapeBits};
pub use sampler::{
    generate_permutation, ksa_double_star, ksa_double_star_with, ksa_star, SampleResult,
    SamplerOptions, Scheme, StopCause,
};
pub use shuffles::{rc4_ksa, Permutation, ShuffleKind, StepData, StepTrace};
pub use sst_rules::{RuleKind, RuleState};
