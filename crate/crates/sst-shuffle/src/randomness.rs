//! Bit-level randomness sources.
//!
//! Everything downstream consumes single bits through [`BitSource`]: the
//! shuffles draw uniform indices by rejection sampling on `ceil(lg n)`-bit
//! chunks, and the riffle draws one bit per card. Keeping the interface at
//! bit granularity makes the key-material accounting (`consumed`) exact and
//! lets recorded tapes replay byte-for-byte.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of bits needed to cover `0..n` — `ceil(lg n)`, with `bits_for(1) == 0`.
pub fn bits_for(n: usize) -> u32 {
    assert!(n >= 1, "bits_for requires n >= 1");
    usize::BITS - (n - 1).leading_zeros()
}

/// A single-consumer stream of bits with an exact consumption counter.
///
/// `consumed` counts every raw bit drawn, including bits burned by rejected
/// chunks in [`uniform_index`](BitSource::uniform_index); that is the number
/// that matters when the stream is finite key material.
pub trait BitSource {
    /// Draw one bit.
    fn next_bit(&mut self) -> Result<bool>;

    /// Total bits drawn so far (monotone, includes rejected chunks).
    fn consumed(&self) -> u64;

    /// Draw `m <= 64` bits, most significant first: bits `1,0,1` give `0b101`.
    fn next_bits(&mut self, m: u32) -> Result<u64> {
        assert!(m <= 64, "next_bits supports at most 64 bits per call");
        let mut v = 0u64;
        for _ in 0..m {
            v = (v << 1) | u64::from(self.next_bit()?);
        }
        Ok(v)
    }

    /// Draw a uniform index in `0..n` by rejection sampling on
    /// `ceil(lg n)`-bit chunks. `n = 1` returns 0 and consumes nothing.
    fn uniform_index(&mut self, n: usize) -> Result<usize> {
        assert!(n >= 1, "uniform_index requires n >= 1");
        if n == 1 {
            return Ok(0);
        }
        let m = bits_for(n);
        loop {
            let v = self.next_bits(m)? as usize;
            if v < n {
                return Ok(v);
            }
        }
    }
}

impl<S: BitSource + ?Sized> BitSource for &mut S {
    fn next_bit(&mut self) -> Result<bool> {
        (**self).next_bit()
    }
    fn consumed(&self) -> u64 {
        (**self).consumed()
    }
}

/// Adapter exposing any [`RngCore`] as an infinite [`BitSource`].
///
/// Bits are taken from each 64-bit word most significant first, so a given
/// RNG always yields the same bit sequence regardless of chunking.
#[derive(Clone, Debug)]
pub struct RandomBits<R> {
    rng: R,
    buf: u64,
    avail: u32,
    consumed: u64,
}

impl<R: RngCore> RandomBits<R> {
    pub fn new(rng: R) -> Self {
        RandomBits { rng, buf: 0, avail: 0, consumed: 0 }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: RngCore> BitSource for RandomBits<R> {
    fn next_bit(&mut self) -> Result<bool> {
        if self.avail == 0 {
            self.buf = self.rng.next_u64();
            self.avail = 64;
        }
        self.avail -= 1;
        self.consumed += 1;
        Ok((self.buf >> self.avail) & 1 == 1)
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// A finite, replayable tape of bits parsed from ASCII `'0'`/`'1'` text.
///
/// Whitespace (newlines, spaces, tabs) is ignored so tape files can be
/// formatted for humans. Reading past the end reports
/// [`Error::KeyExhausted`].
#[derive(Clone, Debug)]
pub struct TapeBits {
    bits: Vec<bool>,
    pos: usize,
}

impl TapeBits {
    pub fn from_ascii(text: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(text.len());
        for (offset, ch) in text.chars().enumerate() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                c if c.is_ascii_whitespace() => {}
                c => return Err(Error::InvalidTapeChar { found: c, offset }),
            }
        }
        Ok(TapeBits { bits, pos: 0 })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }
}

impl BitSource for TapeBits {
    fn next_bit(&mut self) -> Result<bool> {
        match self.bits.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => Err(Error::KeyExhausted { consumed: self.pos as u64 }),
        }
    }

    fn consumed(&self) -> u64 {
        self.pos as u64
    }
}

/// Domain-separation labels for streams derived from one key.
///
/// Distinct labels hash into unrelated seeds, so the permutation bits,
/// transform key and MAC key drawn from the same user key are independent.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    /// Default stream for stand-alone permutation generation.
    Generic = 0,
    /// Bits feeding the first masking permutation.
    MaskG1 = 1,
    /// Bits feeding the second masking permutation.
    MaskG2 = 2,
    /// Key material for the wrapped block transform.
    TransformKey = 3,
    /// Key material reserved for message authentication.
    MacKey = 4,
}

/// Deterministic key-derived bit stream.
///
/// The user key and a [`StreamLabel`] are hashed into a ChaCha20 seed; the
/// stream is infinite unless a bit limit is set, in which case running dry
/// reports [`Error::KeyExhausted`] like a real finite key would.
#[derive(Clone, Debug)]
pub struct KeyStream {
    inner: RandomBits<ChaCha20Rng>,
    label: StreamLabel,
    limit: Option<u64>,
}

impl KeyStream {
    pub fn new(key: &[u8], label: StreamLabel) -> Self {
        assert!(!key.is_empty(), "KeyStream requires a non-empty key");
        let mut hasher = Sha256::new();
        hasher.update((label as u64).to_le_bytes());
        hasher.update(key);
        let seed: [u8; 32] = hasher.finalize().into();
        KeyStream {
            inner: RandomBits::new(ChaCha20Rng::from_seed(seed)),
            label,
            limit: None,
        }
    }

    /// Finite variant: at most `limit_bits` bits may be drawn.
    pub fn with_bit_limit(key: &[u8], label: StreamLabel, limit_bits: u64) -> Self {
        let mut ks = KeyStream::new(key, label);
        ks.limit = Some(limit_bits);
        ks
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Draw a whole byte (8 bits, most significant first).
    pub fn next_byte(&mut self) -> Result<u8> {
        Ok(self.next_bits(8)? as u8)
    }
}

impl BitSource for KeyStream {
    fn next_bit(&mut self) -> Result<bool> {
        if let Some(limit) = self.limit {
            if self.inner.consumed() >= limit {
                return Err(Error::KeyExhausted { consumed: self.inner.consumed() });
            }
        }
        self.inner.next_bit()
    }

    fn consumed(&self) -> u64 {
        self.inner.consumed()
    }
}
