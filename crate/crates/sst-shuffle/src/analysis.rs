//! Closed-form expectations, the sign-distinguisher law, round budgeting,
//! and exact small-n oracles (dense chain laws and augmented deck x rule
//! dynamic programs).

use std::collections::HashMap;
use std::f64::consts::PI;

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::BitSource;
use crate::shuffles::{apply_trace, Permutation, ShuffleKind, StepTrace};
use crate::sst_rules::RuleKind;

/// Largest deck enumerated densely by [`exact_distribution`] (6! = 720).
pub const MAX_DENSE_N: usize = 6;
/// Largest deck for the augmented deck x rule-state dynamic programs.
pub const MAX_DP_N: usize = 4;

fn big(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact n-th harmonic number `H_n = sum 1/k`.
pub fn harmonic(n: u64) -> BigRational {
    assert!(n >= 1, "harmonic requires n >= 1");
    let mut h = BigRational::zero();
    for k in 1..=n {
        h += big(k).recip();
    }
    h
}

/// Exact second-order harmonic number `H_n^(2) = sum 1/k^2`.
pub fn harmonic2(n: u64) -> BigRational {
    assert!(n >= 1, "harmonic2 requires n >= 1");
    let mut h = BigRational::zero();
    for k in 1..=n {
        let k2 = big(k) * big(k);
        h += k2.recip();
    }
    h
}

/// `ln(n!)` as a float, by direct summation (safe far beyond the n = 21
/// overflow point of integer factorials).
pub fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rational fits in f64 range")
}

/// Expected stopping time of the two-phase marking rule on random
/// transpositions, with the stage-by-stage geometric-sum variance.
#[derive(Clone, Debug)]
pub struct KlzExpectation {
    /// `sum_{k<d} n^2/(n-k)^2 + sum_{k=d}^{n-1} n^2/((n-k)(k+1))`, exact.
    pub exact_mean: BigRational,
    /// `sum (1-p)/p^2` over the same stage success probabilities, exact.
    pub exact_variance: BigRational,
    /// Leading-order mean `n(H_n + 1)`.
    pub asymptotic_mean: f64,
    /// Leading-order variance `pi^2 n^2 / 4`.
    pub asymptotic_variance: f64,
}

/// Exact and asymptotic stopping-time moments for the two-phase marking rule
/// under random transpositions. Stage `k` (k cards already marked) succeeds
/// with probability `(n-k)^2/n^2` in phase 1 (`k < d = ceil((n-1)/2)`) and
/// `(n-k)(k+1)/n^2` in phase 2.
pub fn expected_klz_rtrt(n: u64) -> KlzExpectation {
    assert!(n >= 1, "expected_klz_rtrt requires n >= 1");
    let d = n / 2; // ceil((n-1)/2)
    let n2 = big(n) * big(n);
    let mut mean = BigRational::zero();
    let mut var = BigRational::zero();
    for k in 0..n {
        let p = if k < d {
            big(n - k) * big(n - k) / n2.clone()
        } else {
            big(n - k) * big(k + 1) / n2.clone()
        };
        mean += p.recip();
        var += (BigRational::one() - p.clone()) / (p.clone() * p);
    }
    let h = rational_to_f64(&harmonic(n));
    KlzExpectation {
        exact_mean: mean,
        exact_variance: var,
        asymptotic_mean: n as f64 * (h + 1.0),
        asymptotic_variance: PI * PI * (n as f64) * (n as f64) / 4.0,
    }
}

/// Expected stopping time of the checked-set rule on random transpositions.
#[derive(Clone, Debug)]
pub struct MironovExpectation {
    /// `sum_{k=1}^{n-1} n^2/((n-k)(k+1))`, exact (equals `2n^2 H_n/(n+1) - n`).
    pub exact_mean: BigRational,
    /// Leading-order mean `2 n H_n - n`.
    pub asymptotic_mean: f64,
}

/// Exact and asymptotic expected stopping time for the checked-set rule
/// under random transpositions. With `k` cards checked, the next check
/// arrives at rate `(n-k)(k+1)/n^2` (`k` runs 1..n-1; one card starts
/// checked).
pub fn expected_mironov_rtrt(n: u64) -> MironovExpectation {
    assert!(n >= 2, "expected_mironov_rtrt requires n >= 2");
    let n2 = big(n) * big(n);
    let mut mean = BigRational::zero();
    for k in 1..n {
        let p = big(n - k) * big(k + 1) / n2.clone();
        mean += p.recip();
    }
    let h = rational_to_f64(&harmonic(n));
    MironovExpectation {
        exact_mean: mean,
        asymptotic_mean: 2.0 * n as f64 * h - n as f64,
    }
}

/// Law of the permutation's sign after `t` transposition steps.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignLaw {
    pub p_plus: f64,
    pub p_minus: f64,
    pub t: u64,
}

impl SignLaw {
    /// `|p_plus - 1/2|`, the sign distinguisher's advantage.
    pub fn advantage(&self) -> f64 {
        (self.p_plus - 0.5).abs()
    }
}

/// Closed-form sign law after `t` uniform-transposition steps from the
/// identity: `p_plus = 1/2 + 1/2 (2/n - 1)^t` (a self-swap happens with
/// probability 1/n and keeps the sign; otherwise it flips).
pub fn sign_distribution(n: u64, t: u64) -> SignLaw {
    assert!(n >= 1, "sign_distribution requires n >= 1");
    let p_plus = if t == 0 {
        1.0
    } else {
        assert!(t <= i32::MAX as u64, "step count too large for powi");
        0.5 + 0.5 * (2.0 / n as f64 - 1.0).powi(t as i32)
    };
    SignLaw { p_plus, p_minus: 1.0 - p_plus, t }
}

/// Exact-rational `p_plus` for the sign law; drives the full-precision table.
pub fn sign_distribution_exact(n: u64, t: u64) -> BigRational {
    assert!(n >= 1);
    let num = BigInt::from(2i64 - n as i64).pow(t as u32);
    let den = BigInt::from(n).pow(t as u32);
    BigRational::new(&den + &num, BigInt::from(2) * den)
}

/// `log2` of the sign-distinguisher advantage after `t` steps:
/// `t log2(|n-2|/n) - 1`. `t = 0` gives -1 (advantage 1/2).
pub fn sign_advantage_log2(n: u64, t: u64) -> f64 {
    assert!(n >= 1);
    if t == 0 {
        return -1.0;
    }
    let ratio = (n as f64 - 2.0).abs() / n as f64;
    t as f64 * ratio.log2() - 1.0
}

/// Round budget for a target separation `epsilon` under random
/// transpositions: `ceil(n(H_n+1) + (pi n / 2) / sqrt(n! epsilon))`,
/// valid for `0 < epsilon < 1/n!`. The `n! epsilon` product is evaluated in
/// log space so the bound works far beyond 64-bit factorials.
pub fn rounds_for_epsilon(n: u64, epsilon: f64) -> Result<u64> {
    assert!(n >= 1);
    let ln_fact = ln_factorial(n);
    if !(epsilon > 0.0) || epsilon.ln() >= -ln_fact {
        return Err(Error::EpsilonOutOfRange { n, epsilon });
    }
    // Harmonic sum in f64: exact rationals would be needlessly slow for
    // large n and the ceiling is insensitive to 1e-12 relative error.
    let h: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    let base = n as f64 * (h + 1.0);
    let tail = (PI * n as f64 / 2.0) * (-(ln_fact + epsilon.ln()) / 2.0).exp();
    Ok((base + tail).ceil() as u64)
}

/// Format a non-negative rational with `decimals` digits after the point,
/// rounding the last digit half away from zero.
pub fn format_rational(r: &BigRational, decimals: u32) -> String {
    assert!(!r.is_negative(), "format_rational expects a non-negative value");
    let scale = BigInt::from(10u32).pow(decimals);
    let num = r.numer() * &scale;
    let den = r.denom();
    // round(num/den) = floor((2 num + den) / (2 den)) for non-negative num.
    let rounded = (BigInt::from(2) * num + den).div_floor(&(BigInt::from(2) * den));
    let (int_part, frac_part) = rounded.div_rem(&scale);
    if decimals == 0 {
        return int_part.to_string();
    }
    let frac = frac_part.to_string();
    let mut out = int_part.to_string();
    out.push('.');
    for _ in 0..(decimals as usize - frac.len()) {
        out.push('0');
    }
    out.push_str(&frac);
    out
}

/// Format with `sig` significant digits (plain decimal, no exponent);
/// matches how the advantage table's log column is printed.
pub fn format_significant(x: f64, sig: u32) -> String {
    assert!(sig >= 1);
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Truncate (not round) to `decimals` digits, as printed tables often do.
pub fn truncate_decimals(x: f64, decimals: u32) -> String {
    let scale = 10f64.powi(decimals as i32);
    let truncated = (x * scale).trunc() / scale;
    format!("{truncated:.prec$}", prec = decimals as usize)
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Lehmer rank of a deck among all n! decks (lexicographic).
pub fn deck_rank(p: &Permutation) -> usize {
    let n = p.n();
    let mut rank = 0usize;
    for i in 0..n {
        let smaller = (i + 1..n).filter(|&j| p.card_at(j) < p.card_at(i)).count();
        rank = rank * (n - i) + smaller;
    }
    rank
}

/// Inverse of [`deck_rank`].
pub fn deck_unrank(n: usize, mut rank: usize) -> Permutation {
    let mut lehmer = vec![0usize; n];
    for i in (0..n).rev() {
        let base = n - i;
        lehmer[i] = rank % base;
        rank /= base;
    }
    let mut pool: Vec<u32> = (0..n as u32).collect();
    let deck: Vec<u32> = lehmer.iter().map(|&l| pool.remove(l)).collect();
    Permutation::from_deck(deck).expect("unrank produces a valid deck")
}

/// Visit every possible trace of one step with its probability.
fn for_each_trace(
    kind: ShuffleKind,
    n: usize,
    round: u64,
    mut visit: impl FnMut(&StepTrace, f64),
) {
    match kind {
        ShuffleKind::TopToRandom => {
            let p = 1.0 / n as f64;
            for j in 0..n {
                visit(&StepTrace::insert(round, j), p);
            }
        }
        ShuffleKind::RandomTranspositions => {
            let p = 1.0 / (n * n) as f64;
            for i in 0..n {
                for j in 0..n {
                    visit(&StepTrace::transpose(kind, round, i, j), p);
                }
            }
        }
        ShuffleKind::CyclicToRandom => {
            let p = 1.0 / n as f64;
            let i = (round % n as u64) as usize;
            for j in 0..n {
                visit(&StepTrace::transpose(kind, round, i, j), p);
            }
        }
        ShuffleKind::RiffleInverse => {
            let p = (0.5f64).powi(n as i32);
            for mask in 0u64..(1 << n) {
                let bits: Vec<bool> = (0..n).map(|pos| (mask >> pos) & 1 == 1).collect();
                visit(&StepTrace::riffle(round, bits), p);
            }
        }
    }
}

/// Exact law of a chain after `k` steps, dense over all n! decks.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub n: usize,
    pub k: u64,
    probs: Vec<f64>,
}

impl ExactDistribution {
    /// Probability of the deck with the given Lehmer rank.
    pub fn prob(&self, rank: usize) -> f64 {
        self.probs[rank]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

fn advance_law(law: &[f64], decks: &[Permutation], kind: ShuffleKind, n: usize, round: u64) -> Vec<f64> {
    let mut next = vec![0.0; law.len()];
    for (rank, &p) in law.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for_each_trace(kind, n, round, |trace, q| {
            let mut deck = decks[rank].clone();
            apply_trace(&mut deck, trace).expect("enumerated trace is well-formed");
            next[deck_rank(&deck)] += p * q;
        });
    }
    next
}

fn all_decks(n: usize) -> Vec<Permutation> {
    (0..factorial(n)).map(|r| deck_unrank(n, r)).collect()
}

/// Exact law of `kind` started at the identity after `k` steps (`n <= 6`).
/// The cyclic chain's phase is handled by iterating the inhomogeneous kernel
/// from step 0, so `k` fully determines the law.
pub fn exact_distribution(kind: ShuffleKind, n: usize, k: u64) -> Result<ExactDistribution> {
    if n > MAX_DENSE_N {
        return Err(Error::SizeTooLarge { n, max: MAX_DENSE_N });
    }
    assert!(n >= 1);
    let decks = all_decks(n);
    let mut law = vec![0.0; decks.len()];
    law[deck_rank(&Permutation::identity(n))] = 1.0;
    for round in 0..k {
        law = advance_law(&law, &decks, kind, n, round);
    }
    Ok(ExactDistribution { n, k, probs: law })
}

/// Separation distance from uniform: `max over decks of 1 - n! p(deck)`.
pub fn separation(dist: &ExactDistribution) -> f64 {
    let fact = factorial(dist.n) as f64;
    dist.probs
        .iter()
        .map(|&p| 1.0 - fact * p)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Total variation distance from uniform: `1/2 sum |p - 1/n!|`.
pub fn tv(dist: &ExactDistribution) -> f64 {
    let u = 1.0 / factorial(dist.n) as f64;
    0.5 * dist.probs.iter().map(|&p| (p - u).abs()).sum::<f64>()
}

/// Extremes of a law's deviation from uniform, split by side.
///
/// Separation at most `s` guarantees every deck's probability is at least
/// `(1-s)/n!` — a one-sided bound. On the surplus side only the weaker
/// `p - 1/n! <= s (n!-1)/n!` holds (all the missing mass may sit on one
/// deck), and that weaker bound is tight in practice; see the analysis
/// tests for an explicit law with `sep = 1/9` but a surplus of `5/54`.
#[derive(Copy, Clone, Debug)]
pub struct UniformEnvelope {
    pub sep: f64,
    /// `max(1/n! - p)` over decks (how far below uniform).
    pub max_deficit: f64,
    /// `max(p - 1/n!)` over decks (how far above uniform).
    pub max_surplus: f64,
}

pub fn uniform_envelope(dist: &ExactDistribution) -> UniformEnvelope {
    let u = 1.0 / factorial(dist.n) as f64;
    let mut max_deficit = 0.0f64;
    let mut max_surplus = 0.0f64;
    for &p in &dist.probs {
        max_deficit = max_deficit.max(u - p);
        max_surplus = max_surplus.max(p - u);
    }
    UniformEnvelope { sep: separation(dist), max_deficit, max_surplus }
}

use crate::sst_rules::RuleState;

struct DpProfile {
    /// `tails[k] = Pr(T > k)` for `k = 0..=horizon`.
    tails: Vec<f64>,
    /// Largest `|Pr(deck | T = t) - 1/n!|` over all decks and reachable t.
    max_conditional_dev: f64,
}

/// Exact dynamic program over the augmented (deck, rule state) chain.
/// `done(completed_rounds, current_tail)` decides when to stop extending.
fn run_sst_dp(
    kind: ShuffleKind,
    rule: RuleKind,
    n: usize,
    mut done: impl FnMut(u64, f64) -> bool,
) -> Result<DpProfile> {
    if n > MAX_DP_N {
        return Err(Error::SizeTooLarge { n, max: MAX_DP_N });
    }
    if !rule.valid_for(kind) {
        return Err(Error::InvalidPairing { kind, rule });
    }
    let fact = factorial(n);
    let uniform = 1.0 / fact as f64;
    let decks = all_decks(n);
    let identity = Permutation::identity(n);
    let init_state = rule.new_state(&identity);

    let mut max_dev = 0.0f64;
    let mut tails: Vec<f64> = Vec::new();
    let mut active: HashMap<(usize, RuleState), f64> = HashMap::new();

    if init_state.has_stopped() {
        // Degenerate decks (n = 1 pair separation) stop at T = 0 with the
        // identity deck, which is the uniform law on one deck.
        tails.push(0.0);
        max_dev = (1.0 - uniform).abs();
        return Ok(DpProfile { tails, max_conditional_dev: max_dev });
    }

    active.insert((deck_rank(&identity), init_state), 1.0);
    tails.push(1.0);

    let mut stopped_now = vec![0.0f64; fact];
    let mut round = 0u64;
    while !done(round, *tails.last().expect("tails non-empty")) && !active.is_empty() {
        let mut next: HashMap<(usize, RuleState), f64> = HashMap::with_capacity(active.len());
        stopped_now.iter_mut().for_each(|m| *m = 0.0);
        for ((rank, state), p) in &active {
            for_each_trace(kind, n, round, |trace, q| {
                let mut st = state.clone();
                let fired = st
                    .update(&decks[*rank], trace)
                    .expect("pairing validated before the DP");
                let mut deck = decks[*rank].clone();
                apply_trace(&mut deck, trace).expect("enumerated trace is well-formed");
                let w = p * q;
                let r2 = deck_rank(&deck);
                if fired {
                    stopped_now[r2] += w;
                } else {
                    *next.entry((r2, st)).or_insert(0.0) += w;
                }
            });
        }
        let mass: f64 = stopped_now.iter().sum();
        if mass > 1e-14 {
            for &m in &stopped_now {
                max_dev = max_dev.max((m / mass - uniform).abs());
            }
        }
        active = next;
        round += 1;
        tails.push(active.values().sum());
    }
    Ok(DpProfile { tails, max_conditional_dev: max_dev })
}

/// Exact `Pr(T > k)` for the rule on the chain, from the augmented dynamic
/// program (`n <= 4`).
pub fn sst_tail_exact(kind: ShuffleKind, rule: RuleKind, n: usize, k: u64) -> Result<f64> {
    let profile = run_sst_dp(kind, rule, n, |completed, _| completed >= k)?;
    // The loop ends early if every trajectory has stopped; the tail is then 0.
    Ok(profile.tails.get(k as usize).copied().unwrap_or(0.0))
}

/// Exact `max over t, decks of |Pr(deck | T = t) - 1/n!|` — zero (to float
/// precision) exactly when the rule is a strong stationary time (`n <= 4`).
/// The program runs until the undecided mass falls below 1e-13.
pub fn conditional_uniformity(kind: ShuffleKind, rule: RuleKind, n: usize) -> Result<f64> {
    let profile = run_sst_dp(kind, rule, n, |_, tail| tail < 1e-13)?;
    Ok(profile.max_conditional_dev)
}

/// One point of the separation-versus-tail comparison.
#[derive(Copy, Clone, Debug, Serialize)]
pub struct Eq1Point {
    pub k: u64,
    pub sep: f64,
    pub tail: f64,
}

/// Exact `sep(L(X_k))` and `Pr(T > k)` side by side for `k = 0, 1, ...`
/// until the tail drops below `tail_floor`. A strong stationary time must
/// satisfy `sep <= tail` at every point.
pub fn separation_vs_tail(
    kind: ShuffleKind,
    rule: RuleKind,
    n: usize,
    tail_floor: f64,
) -> Result<Vec<Eq1Point>> {
    let profile = run_sst_dp(kind, rule, n, |_, tail| tail < tail_floor)?;
    let decks = all_decks(n);
    let fact = factorial(n) as f64;
    let mut law = vec![0.0; decks.len()];
    law[deck_rank(&Permutation::identity(n))] = 1.0;
    let mut points = Vec::with_capacity(profile.tails.len());
    for (k, &tail) in profile.tails.iter().enumerate() {
        if k > 0 {
            law = advance_law(&law, &decks, kind, n, k as u64 - 1);
        }
        let sep = law.iter().map(|&p| 1.0 - fact * p).fold(f64::NEG_INFINITY, f64::max);
        points.push(Eq1Point { k: k as u64, sep, tail });
    }
    Ok(points)
}

/// Uniform deck via Fisher-Yates driven by a bit source.
pub fn uniform_deck(n: usize, src: &mut dyn BitSource) -> Result<Permutation> {
    let mut deck = Permutation::identity(n);
    let mut cards: Vec<u32> = deck.as_slice().to_vec();
    for i in (1..n).rev() {
        let j = src.uniform_index(i + 1)?;
        cards.swap(i, j);
    }
    deck = Permutation::from_deck(cards)?;
    Ok(deck)
}

/// The built-in sign adversary: guesses "real" when the deck is even.
pub fn sign_adversary(deck: &Permutation) -> bool {
    deck.sign() == 1
}

/// What the "real" side of the distinguishing experiment runs.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ShufflerSpec {
    /// Fixed-step run.
    KsaStar { kind: ShuffleKind, n: usize, steps: u64 },
    /// Run-until-stopped (perfect sampling).
    KsaDoubleStar { kind: ShuffleKind, n: usize, rule: RuleKind },
    /// A uniform deck (null experiment).
    Uniform { n: usize },
}

impl ShufflerSpec {
    pub fn n(&self) -> usize {
        match *self {
            ShufflerSpec::KsaStar { n, .. }
            | ShufflerSpec::KsaDoubleStar { n, .. }
            | ShufflerSpec::Uniform { n } => n,
        }
    }

    fn sample(&self, src: &mut dyn BitSource) -> Result<Permutation> {
        match *self {
            ShufflerSpec::KsaStar { kind, n, steps } => {
                Ok(crate::sampler::ksa_star(kind, n, steps, src)?.deck)
            }
            ShufflerSpec::KsaDoubleStar { kind, n, rule } => {
                Ok(crate::sampler::ksa_double_star(kind, n, rule, src, None)?.deck)
            }
            ShufflerSpec::Uniform { n } => uniform_deck(n, src),
        }
    }
}

/// Monte-Carlo advantage estimate with its binomial standard error.
#[derive(Copy, Clone, Debug, Serialize)]
pub struct AdvantageEstimate {
    /// `|Pr[A(real) = 1] - Pr[A(uniform) = 1]|`.
    pub advantage: f64,
    pub std_error: f64,
    pub trials: u64,
    pub p_real: f64,
    pub p_ideal: f64,
}

/// Estimate an adversary's advantage at telling `real` from a uniform deck,
/// over `trials` paired samples. Deterministic in `seed`.
pub fn indistinguishability_advantage(
    real: &ShufflerSpec,
    mut adversary: impl FnMut(&Permutation) -> bool,
    trials: u64,
    seed: u64,
) -> Result<AdvantageEstimate> {
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use crate::randomness::RandomBits;

    assert!(trials >= 1);
    let ideal = ShufflerSpec::Uniform { n: real.n() };
    let mut hits_real = 0u64;
    let mut hits_ideal = 0u64;
    for trial in 0..trials {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(2 * trial);
        let mut src = RandomBits::new(rng);
        if adversary(&real.sample(&mut src)?) {
            hits_real += 1;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(2 * trial + 1);
        let mut src = RandomBits::new(rng);
        if adversary(&ideal.sample(&mut src)?) {
            hits_ideal += 1;
        }
    }
    let p_real = hits_real as f64 / trials as f64;
    let p_ideal = hits_ideal as f64 / trials as f64;
    let var = p_real * (1.0 - p_real) / trials as f64 + p_ideal * (1.0 - p_ideal) / trials as f64;
    Ok(AdvantageEstimate {
        advantage: (p_real - p_ideal).abs(),
        std_error: var.sqrt(),
        trials,
        p_real,
        p_ideal,
    })
}
