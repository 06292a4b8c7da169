//! Key-derived bit-level masking.
//!
//! A block's bits are permuted by applying a shuffled deck of bit indices:
//! the deck is produced by the riffle/pair-separation sampler, so the
//! permutation is exactly uniform and its stopping time leaks nothing about
//! which permutation was chosen. For throughput, a bit permutation is
//! decomposed into `lg(n_bits)` stable-partition rounds (one radix-sort pass
//! per destination bit), each executed word-at-a-time with `pext`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{BitSource, KeyStream, StreamLabel};
use crate::sampler::{ksa_double_star, SampleResult};
use crate::shuffles::{Permutation, ShuffleKind};
use crate::sst_rules::RuleKind;

pub const MIN_BLOCK_BITS: usize = 8;
pub const MAX_BLOCK_BITS: usize = 1024;
pub const DEFAULT_BLOCK_BITS: usize = 128;

fn validate_block_bits(n_bits: usize) -> Result<()> {
    if !n_bits.is_power_of_two() || !(MIN_BLOCK_BITS..=MAX_BLOCK_BITS).contains(&n_bits) {
        return Err(Error::BlockSizeUnsupported { n_bits });
    }
    Ok(())
}

/// Bit `i` of a block lives at bit `i & 7` of byte `i >> 3`.
fn get_bit(bytes: &[u8], i: usize) -> bool {
    (bytes[i >> 3] >> (i & 7)) & 1 == 1
}

fn set_bit(bytes: &mut [u8], i: usize) {
    bytes[i >> 3] |= 1 << (i & 7);
}

/// A permutation of the bit positions of a block: bit `i` of the input
/// moves to bit `map[i]` of the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPermutation {
    map: Vec<u32>,
    n_bits: usize,
}

impl BitPermutation {
    pub fn identity(n_bits: usize) -> Result<Self> {
        validate_block_bits(n_bits)?;
        Ok(Self { map: (0..n_bits as u32).collect(), n_bits })
    }

    /// Build from an explicit destination map (`map[i]` = output position of
    /// input bit `i`); must be a bijection on a supported block size.
    pub fn from_map(map: Vec<u32>) -> Result<Self> {
        let n_bits = map.len();
        validate_block_bits(n_bits)?;
        let mut seen = vec![false; n_bits];
        for &dest in &map {
            let d = dest as usize;
            if d >= n_bits || seen[d] {
                return Err(Error::InvalidDeck { n: n_bits });
            }
            seen[d] = true;
        }
        Ok(Self { map, n_bits })
    }

    /// Read a shuffled deck as a bit permutation: the card with label `i`
    /// sits at some position `p`, so input bit `i` is sent to output bit `p`.
    pub fn from_deck(deck: &Permutation) -> Result<Self> {
        let n_bits = deck.n();
        validate_block_bits(n_bits)?;
        let mut map = vec![0u32; n_bits];
        for pos in 0..n_bits {
            map[deck.card_at(pos) as usize] = pos as u32;
        }
        Ok(Self { map, n_bits })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn map(&self) -> &[u32] {
        &self.map
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.n_bits];
        for (i, &dest) in self.map.iter().enumerate() {
            inv[dest as usize] = i as u32;
        }
        Self { map: inv, n_bits: self.n_bits }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &d)| d as usize == i)
    }

    /// Reference (bit-at-a-time) application; the correctness baseline for
    /// the word-level path.
    pub fn apply_bits(&self, input: &[u8]) -> Result<Vec<u8>> {
        if input.len() * 8 != self.n_bits {
            return Err(Error::SizeMismatch { expected: self.n_bits / 8, got: input.len() });
        }
        let mut out = vec![0u8; input.len()];
        for (i, &dest) in self.map.iter().enumerate() {
            if get_bit(input, i) {
                set_bit(&mut out, dest as usize);
            }
        }
        Ok(out)
    }
}

/// Reference bit-permutation application (see [`BitPermutation::apply_bits`]).
pub fn apply_bits(perm: &BitPermutation, input: &[u8]) -> Result<Vec<u8>> {
    perm.apply_bits(input)
}

// --- word-level machinery ------------------------------------------------

/// Software parallel bit extract (Hacker's Delight 7-4): gathers the bits of
/// `x` selected by `mask` into the low bits of the result.
fn pext_soft(x: u64, mask: u64) -> u64 {
    let mut x = x & mask;
    let mut m = mask;
    let mut mk = !m << 1;
    for i in 0..6 {
        let mut mp = mk ^ (mk << 1);
        mp ^= mp << 2;
        mp ^= mp << 4;
        mp ^= mp << 8;
        mp ^= mp << 16;
        mp ^= mp << 32;
        let mv = mp & m;
        m = (m ^ mv) | (mv >> (1u32 << i));
        let t = x & mv;
        x = (x ^ t) | (t >> (1u32 << i));
        mk &= !mp;
    }
    x
}

#[cfg(all(test, target_arch = "x86_64"))]
#[target_feature(enable = "bmi2")]
unsafe fn pext_hw(x: u64, mask: u64) -> u64 {
    core::arch::x86_64::_pext_u64(x, mask)
}

fn have_bmi2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        static BMI2: OnceLock<bool> = OnceLock::new();
        *BMI2.get_or_init(|| std::is_x86_feature_detected!("bmi2"))
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}


fn valid_mask(n_bits: usize, word_index: usize) -> u64 {
    let rem = n_bits - word_index * 64;
    if rem >= 64 {
        !0u64
    } else {
        (1u64 << rem) - 1
    }
}

// Blocks are whole multiples of 8 bytes (power-of-two sizes from 8 bits
// up), and the bit addressing is little-endian within bytes and words, so
// word `w` is exactly the little-endian reading of bytes 8w..8w+8.
fn bytes_to_words(bytes: &[u8], words: &mut [u64]) {
    if bytes.len() < 8 {
        let mut padded = [0u8; 8];
        padded[..bytes.len()].copy_from_slice(bytes);
        words[0] = u64::from_le_bytes(padded);
        return;
    }
    for (chunk, w) in bytes.chunks_exact(8).zip(words.iter_mut()) {
        *w = u64::from_le_bytes(chunk.try_into().unwrap());
    }
}

fn words_to_bytes(words: &[u64], bytes: &mut [u8]) {
    if bytes.len() < 8 {
        let raw = words[0].to_le_bytes();
        bytes.copy_from_slice(&raw[..bytes.len()]);
        return;
    }
    for (chunk, w) in bytes.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
}

fn push_bits(dst: &mut [u64], cursor: usize, chunk: u64, len: usize) {
    if len == 0 {
        return;
    }
    let wi = cursor >> 6;
    let off = cursor & 63;
    dst[wi] |= chunk << off;
    if off != 0 && off + len > 64 {
        dst[wi + 1] |= chunk >> (64 - off);
    }
}

/// A bit permutation factored into `lg(n_bits)` stable-partition rounds.
///
/// Round `s` partitions positions by bit `s` of each bit's final
/// destination (a radix-sort pass): zero-bit positions keep their order at
/// the front, one-bit positions follow. Composing all rounds routes input
/// bit `i` to `map[i]` exactly; construction asserts this.
#[derive(Clone, Debug)]
pub struct RiffleDecomposition {
    n_bits: usize,
    /// `rounds[s][pos]` — the partition bit for `pos` in round `s`.
    rounds: Vec<Vec<bool>>,
    /// The same rounds packed into words for the fast path, restricted to
    /// the live bits of each word.
    round_masks: Vec<Vec<u64>>,
    /// Per round and word: output cursors for that word's 0-selected and
    /// 1-selected bits. Fixed by the masks, so the per-block work has no
    /// serial cursor to carry.
    round_cursors: Vec<Vec<(u32, u32)>>,
}

impl RiffleDecomposition {
    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn rounds(&self) -> &[Vec<bool>] {
        &self.rounds
    }

    #[inline(always)]
    fn apply_round_words(
        &self,
        round: usize,
        src: &[u64],
        dst: &mut [u64],
        pext: impl Fn(u64, u64) -> u64,
    ) {
        dst.iter_mut().for_each(|w| *w = 0);
        let masks = &self.round_masks[round];
        let cursors = &self.round_cursors[round];
        for (wi, (&w, &m)) in src.iter().zip(masks).enumerate() {
            let sel0 = !m & valid_mask(self.n_bits, wi);
            let (at0, at1) = cursors[wi];
            push_bits(dst, at0 as usize, pext(w, sel0), sel0.count_ones() as usize);
            push_bits(dst, at1 as usize, pext(w, m), m.count_ones() as usize);
        }
    }

    fn apply_rounds_soft<'a>(&self, mut cur: &'a mut [u64], mut next: &'a mut [u64]) {
        for round in 0..self.rounds.len() {
            self.apply_round_words(round, cur, next, pext_soft);
            std::mem::swap(&mut cur, &mut next);
        }
    }

    /// Same loop with the bit-extract instruction inlined; the feature
    /// attribute must wrap the whole loop or the intrinsic stays an outlined
    /// call per word.
    ///
    /// Safety: caller must have verified BMI2 support.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "bmi2")]
    unsafe fn apply_rounds_bmi2<'a>(&self, mut cur: &'a mut [u64], mut next: &'a mut [u64]) {
        for round in 0..self.rounds.len() {
            self.apply_round_words(round, cur, next, |x, m| core::arch::x86_64::_pext_u64(x, m));
            std::mem::swap(&mut cur, &mut next);
        }
    }

    /// Word-level application of the full round sequence; bit-identical to
    /// [`BitPermutation::apply_bits`] on the permutation it was built from.
    pub fn apply_bits_fast(&self, input: &[u8]) -> Result<Vec<u8>> {
        if input.len() * 8 != self.n_bits {
            return Err(Error::SizeMismatch { expected: self.n_bits / 8, got: input.len() });
        }
        // Blocks cap at MAX_BLOCK_BITS, so the ping-pong buffers fit on the
        // stack; after an odd number of rounds the result sits in `b`.
        let n_words = self.n_bits.div_ceil(64);
        let mut a = [0u64; MAX_BLOCK_BITS / 64];
        let mut b = [0u64; MAX_BLOCK_BITS / 64];
        let (cur, next) = (&mut a[..n_words], &mut b[..n_words]);
        bytes_to_words(input, cur);
        #[cfg(target_arch = "x86_64")]
        if have_bmi2() {
            // Safety: guarded by runtime BMI2 detection.
            unsafe { self.apply_rounds_bmi2(cur, next) };
        } else {
            self.apply_rounds_soft(cur, next);
        }
        #[cfg(not(target_arch = "x86_64"))]
        self.apply_rounds_soft(cur, next);

        let result = if self.rounds.len() % 2 == 1 { &*next } else { &*cur };
        let mut out = vec![0u8; input.len()];
        words_to_bytes(result, &mut out);
        Ok(out)
    }
}

/// Factor a bit permutation into stable-partition rounds, least-significant
/// destination bit first. Panics only if the internal soundness check fails,
/// which would be a bug.
pub fn decompose_to_riffle_rounds(perm: &BitPermutation) -> RiffleDecomposition {
    let n_bits = perm.n_bits();
    let lg = n_bits.trailing_zeros() as usize;
    let n_words = n_bits.div_ceil(64);
    // cur[pos] = which input bit currently sits at pos.
    let mut cur: Vec<u32> = (0..n_bits as u32).collect();
    let mut rounds = Vec::with_capacity(lg);
    let mut round_masks = Vec::with_capacity(lg);
    let mut round_cursors = Vec::with_capacity(lg);
    for s in 0..lg {
        let bits: Vec<bool> =
            cur.iter().map(|&item| (perm.map()[item as usize] >> s) & 1 == 1).collect();
        let mut masks = vec![0u64; n_words];
        for (pos, &b) in bits.iter().enumerate() {
            if b {
                masks[pos >> 6] |= 1u64 << (pos & 63);
            }
        }
        // Where each word's extracted runs land: zeros pack from the front,
        // ones from the zero-count onward.
        let zeros_total: u32 =
            masks.iter().enumerate().map(|(wi, &m)| (!m & valid_mask(n_bits, wi)).count_ones()).sum();
        let mut cursors = Vec::with_capacity(n_words);
        let (mut at0, mut at1) = (0u32, zeros_total);
        for (wi, &m) in masks.iter().enumerate() {
            cursors.push((at0, at1));
            at0 += (!m & valid_mask(n_bits, wi)).count_ones();
            at1 += m.count_ones();
        }
        debug_assert_eq!(at0, zeros_total);
        debug_assert_eq!(at1, n_bits as u32);

        let mut next: Vec<u32> = Vec::with_capacity(n_bits);
        next.extend(cur.iter().zip(&bits).filter(|&(_, &b)| !b).map(|(&i, _)| i));
        next.extend(cur.iter().zip(&bits).filter(|&(_, &b)| b).map(|(&i, _)| i));
        cur = next;
        rounds.push(bits);
        round_masks.push(masks);
        round_cursors.push(cursors);
    }
    for (pos, &item) in cur.iter().enumerate() {
        assert_eq!(
            perm.map()[item as usize] as usize,
            pos,
            "radix decomposition failed to realize the permutation"
        );
    }
    RiffleDecomposition { n_bits, rounds, round_masks, round_cursors }
}

/// Word-level bit permutation via a precomputed decomposition (see
/// [`RiffleDecomposition::apply_bits_fast`]).
pub fn apply_bits_fast(dec: &RiffleDecomposition, input: &[u8]) -> Result<Vec<u8>> {
    dec.apply_bits_fast(input)
}

// --- the masked cipher ---------------------------------------------------

/// The pluggable core `F`. Implementations must be deterministic and
/// length-preserving on whole blocks.
pub trait BlockTransform: Send + Sync {
    fn encrypt(&self, block: &mut [u8]);
    fn decrypt(&self, block: &mut [u8]);
}

/// `F = id`; isolates the masking layers for composition tests.
pub struct IdentityTransform;

impl BlockTransform for IdentityTransform {
    fn encrypt(&self, _block: &mut [u8]) {}
    fn decrypt(&self, _block: &mut [u8]) {}
}

/// `F = XOR` with a fixed key-derived pad (a stand-in core, not a real
/// cipher: every block gets the same pad).
pub struct XorPad {
    pad: Vec<u8>,
}

impl XorPad {
    pub fn new(key: &[u8], block_bytes: usize) -> Result<Self> {
        let mut stream = KeyStream::new(key, StreamLabel::TransformKey);
        let mut pad = vec![0u8; block_bytes];
        for b in &mut pad {
            *b = stream.next_byte()?;
        }
        Ok(Self { pad })
    }
}

impl BlockTransform for XorPad {
    fn encrypt(&self, block: &mut [u8]) {
        for (b, p) in block.iter_mut().zip(&self.pad) {
            *b ^= p;
        }
    }

    fn decrypt(&self, block: &mut [u8]) {
        self.encrypt(block);
    }
}

/// Which built-in core to plug in.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformChoice {
    Identity,
    #[default]
    XorStream,
}

impl std::str::FromStr for TransformChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "id" => Ok(TransformChoice::Identity),
            "xor-stream" | "xor" => Ok(TransformChoice::XorStream),
            other => Err(Error::InvalidConfig(format!("unknown transform `{other}`"))),
        }
    }
}

/// Both masking permutations with the evidence of how they were drawn.
pub struct DerivedMasks {
    pub g1: BitPermutation,
    pub g2: BitPermutation,
    pub g1_sample: SampleResult,
    pub g2_sample: SampleResult,
}

/// Draw one masking permutation from an arbitrary bit source by running the
/// riffle chain to pair separation; the deck is exactly uniform and the run
/// length carries no information about it.
pub fn derive_permutation_from_source(
    src: &mut dyn BitSource,
    n_bits: usize,
) -> Result<(BitPermutation, SampleResult)> {
    validate_block_bits(n_bits)?;
    let sample =
        ksa_double_star(ShuffleKind::RiffleInverse, n_bits, RuleKind::PairSeparation, src, None)?;
    let perm = BitPermutation::from_deck(&sample.deck)?;
    Ok((perm, sample))
}

/// Derive the outer and inner masking permutations from a key, on
/// domain-separated streams (the raw key bytes never touch the core's
/// stream).
pub fn derive_permutations(key: &[u8], n_bits: usize) -> Result<DerivedMasks> {
    let mut g1_stream = KeyStream::new(key, StreamLabel::MaskG1);
    let (g1, g1_sample) = derive_permutation_from_source(&mut g1_stream, n_bits)?;
    let mut g2_stream = KeyStream::new(key, StreamLabel::MaskG2);
    let (g2, g2_sample) = derive_permutation_from_source(&mut g2_stream, n_bits)?;
    Ok(DerivedMasks { g1, g2, g1_sample, g2_sample })
}

/// `y = G2(F(G1(x)))` on fixed-size blocks, with the masks applied through
/// their precomputed partition rounds. Masks are derived once per key at
/// construction, never per message.
pub struct MaskedCipher {
    n_bits: usize,
    g1: BitPermutation,
    g2: BitPermutation,
    dec_g1: RiffleDecomposition,
    dec_g1_inv: RiffleDecomposition,
    dec_g2: RiffleDecomposition,
    dec_g2_inv: RiffleDecomposition,
    transform: Box<dyn BlockTransform>,
    mac_key: Vec<u8>,
    setup_steps: (u64, u64),
}

impl MaskedCipher {
    /// Derive everything from `key`: both masks, the core's key material,
    /// and an authentication key (reserved for callers; unused here). All
    /// four live on domain-separated streams.
    pub fn new(key: &[u8], n_bits: usize, choice: TransformChoice) -> Result<Self> {
        let masks = derive_permutations(key, n_bits)?;
        let transform: Box<dyn BlockTransform> = match choice {
            TransformChoice::Identity => Box::new(IdentityTransform),
            TransformChoice::XorStream => Box::new(XorPad::new(key, n_bits / 8)?),
        };
        let mut mac_stream = KeyStream::new(key, StreamLabel::MacKey);
        let mut mac_key = vec![0u8; 32];
        for b in &mut mac_key {
            *b = mac_stream.next_byte()?;
        }
        let setup_steps = (masks.g1_sample.steps, masks.g2_sample.steps);
        Self::assemble(masks.g1, masks.g2, transform, mac_key, setup_steps)
    }

    /// Build from explicit masks (tests, interop); no key material derived.
    pub fn from_parts(
        g1: BitPermutation,
        g2: BitPermutation,
        transform: Box<dyn BlockTransform>,
    ) -> Result<Self> {
        if g1.n_bits() != g2.n_bits() {
            return Err(Error::SizeMismatch { expected: g1.n_bits(), got: g2.n_bits() });
        }
        Self::assemble(g1, g2, transform, Vec::new(), (0, 0))
    }

    fn assemble(
        g1: BitPermutation,
        g2: BitPermutation,
        transform: Box<dyn BlockTransform>,
        mac_key: Vec<u8>,
        setup_steps: (u64, u64),
    ) -> Result<Self> {
        let n_bits = g1.n_bits();
        let dec_g1 = decompose_to_riffle_rounds(&g1);
        let dec_g1_inv = decompose_to_riffle_rounds(&g1.inverse());
        let dec_g2 = decompose_to_riffle_rounds(&g2);
        let dec_g2_inv = decompose_to_riffle_rounds(&g2.inverse());
        Ok(Self {
            n_bits,
            g1,
            g2,
            dec_g1,
            dec_g1_inv,
            dec_g2,
            dec_g2_inv,
            transform,
            mac_key,
            setup_steps,
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn block_bytes(&self) -> usize {
        self.n_bits / 8
    }

    pub fn g1(&self) -> &BitPermutation {
        &self.g1
    }

    pub fn g2(&self) -> &BitPermutation {
        &self.g2
    }

    /// Derived authentication key (empty when built from parts).
    pub fn mac_key(&self) -> &[u8] {
        &self.mac_key
    }

    /// Rounds the two mask derivations took at setup — recorded once per
    /// key, so no per-message signal exists.
    pub fn setup_steps(&self) -> (u64, u64) {
        self.setup_steps
    }

    fn check_whole_blocks(&self, len: usize) -> Result<()> {
        if len % self.block_bytes() != 0 {
            return Err(Error::SizeMismatch {
                expected: len.div_ceil(self.block_bytes()) * self.block_bytes(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn encrypt_block(&self, block: &mut [u8]) -> Result<()> {
        let masked = self.dec_g1.apply_bits_fast(block)?;
        block.copy_from_slice(&masked);
        self.transform.encrypt(block);
        let masked = self.dec_g2.apply_bits_fast(block)?;
        block.copy_from_slice(&masked);
        Ok(())
    }

    pub fn decrypt_block(&self, block: &mut [u8]) -> Result<()> {
        let unmasked = self.dec_g2_inv.apply_bits_fast(block)?;
        block.copy_from_slice(&unmasked);
        self.transform.decrypt(block);
        let unmasked = self.dec_g1_inv.apply_bits_fast(block)?;
        block.copy_from_slice(&unmasked);
        Ok(())
    }

    /// Encrypt a whole number of blocks in place; partial blocks are
    /// rejected (padding is the caller's business).
    pub fn encrypt(&self, data: &mut [u8]) -> Result<()> {
        self.check_whole_blocks(data.len())?;
        for block in data.chunks_exact_mut(self.block_bytes()) {
            self.encrypt_block(block)?;
        }
        Ok(())
    }

    pub fn decrypt(&self, data: &mut [u8]) -> Result<()> {
        self.check_whole_blocks(data.len())?;
        for block in data.chunks_exact_mut(self.block_bytes()) {
            self.decrypt_block(block)?;
        }
        Ok(())
    }
}

/// Convenience wrapper over [`MaskedCipher::encrypt`].
pub fn mask_encrypt(cipher: &MaskedCipher, data: &mut [u8]) -> Result<()> {
    cipher.encrypt(data)
}

/// Convenience wrapper over [`MaskedCipher::decrypt`].
pub fn mask_decrypt(cipher: &MaskedCipher, data: &mut [u8]) -> Result<()> {
    cipher.decrypt(data)
}
