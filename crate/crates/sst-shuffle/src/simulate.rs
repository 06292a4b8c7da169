//! Deterministic Monte-Carlo harness for stopping-time statistics.
//!
//! Every trial derives its generator from `(seed, trial_index)` via the
//! stream parameter of ChaCha, and aggregation is integer-exact, so a report
//! is byte-identical for a given config no matter how many workers ran it.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{bits_for, RandomBits};
use crate::sampler::{ksa_double_star, ksa_star};
use crate::shuffles::ShuffleKind;
use crate::sst_rules::RuleKind;

/// One batch of stopping-time trials.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub kind: ShuffleKind,
    pub rule: RuleKind,
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads (0 = rayon default). Not part of the reported
    /// identity: the same config must produce the same report at any width.
    #[serde(skip, default)]
    pub workers: usize,
}

/// Aggregated statistics over all trials of a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: TrialConfig,
    pub trials: u64,
    pub mean_steps: f64,
    /// Unbiased sample variance of the stopping time.
    pub var_steps: f64,
    pub mean_bits: f64,
    /// Stopping-time histogram: `T -> count`, keys sorted.
    pub histogram: BTreeMap<u64, u64>,
    /// Wall-clock time; excluded from serialized output so reports stay
    /// byte-identical across runs and worker counts.
    #[serde(skip, default)]
    pub wall_time: Duration,
}

/// Exact integer sums; merged associatively so the fold order (and hence
/// the worker count) cannot change the result.
#[derive(Clone, Default)]
struct Agg {
    count: u64,
    sum_steps: u128,
    sum_sq_steps: u128,
    sum_bits: u128,
    hist: BTreeMap<u64, u64>,
}

impl Agg {
    fn push(&mut self, steps: u64, bits: u64) {
        self.count += 1;
        self.sum_steps += steps as u128;
        self.sum_sq_steps += (steps as u128) * (steps as u128);
        self.sum_bits += bits as u128;
        *self.hist.entry(steps).or_insert(0) += 1;
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: Agg) -> Agg {
        self.count += other.count;
        self.sum_steps += other.sum_steps;
        self.sum_sq_steps += other.sum_sq_steps;
        self.sum_bits += other.sum_bits;
        for (steps, count) in other.hist {
            *self.hist.entry(steps).or_insert(0) += count;
        }
        self
    }
}

fn trial_source(seed: u64, trial: u64) -> RandomBits<ChaCha20Rng> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    RandomBits::new(rng)
}

fn one_trial(cfg: &TrialConfig, trial: u64) -> (u64, u64) {
    let mut src = trial_source(cfg.seed, trial);
    let result = ksa_double_star(cfg.kind, cfg.n, cfg.rule, &mut src, None)
        .expect("pairing validated up front; a PRNG source never exhausts");
    (result.steps, result.bits_used)
}

fn report_from(cfg: &TrialConfig, agg: Agg, wall_time: Duration) -> SimulationReport {
    let trials = agg.count;
    let mean_steps = agg.sum_steps as f64 / trials as f64;
    let mean_bits = agg.sum_bits as f64 / trials as f64;
    // Unbiased variance from integer sums: (n * sum_sq - sum^2) / (n(n-1)).
    let var_steps = if trials < 2 {
        0.0
    } else {
        let num = agg.count as u128 * agg.sum_sq_steps - agg.sum_steps * agg.sum_steps;
        num as f64 / (trials as f64 * (trials - 1) as f64)
    };
    SimulationReport {
        config: *cfg,
        trials,
        mean_steps,
        var_steps,
        mean_bits,
        histogram: agg.hist,
        wall_time,
    }
}

fn run_trials_serial(cfg: &TrialConfig) -> SimulationReport {
    let start = Instant::now();
    let mut agg = Agg::default();
    for trial in 0..cfg.trials {
        let (steps, bits) = one_trial(cfg, trial);
        agg.push(steps, bits);
    }
    report_from(cfg, agg, start.elapsed())
}

#[cfg(feature = "parallel")]
fn run_trials_parallel(cfg: &TrialConfig) -> Result<SimulationReport> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let agg = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .fold(Agg::default, |mut agg, trial| {
                let (steps, bits) = one_trial(cfg, trial);
                agg.push(steps, bits);
                agg
            })
            .reduce(Agg::default, Agg::merge)
    });
    Ok(report_from(cfg, agg, start.elapsed()))
}

/// Run all trials of a config. With the `parallel` feature the work is
/// spread over `cfg.workers` threads (0 = all cores); without it the run is
/// sequential. Output is identical either way.
pub fn run_trials(cfg: &TrialConfig) -> Result<SimulationReport> {
    if !cfg.rule.valid_for(cfg.kind) {
        return Err(Error::InvalidPairing { kind: cfg.kind, rule: cfg.rule });
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        run_trials_parallel(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(run_trials_serial(cfg))
    }
}

/// Force the sequential path regardless of features (benchmark baseline).
pub fn run_trials_sequential(cfg: &TrialConfig) -> Result<SimulationReport> {
    if !cfg.rule.valid_for(cfg.kind) {
        return Err(Error::InvalidPairing { kind: cfg.kind, rule: cfg.rule });
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    Ok(run_trials_serial(cfg))
}

/// Empirical sign law after exactly `t` cyclic-transposition steps.
/// `t = 0` returns 1 exactly (the identity is even).
pub fn sign_empirical(n: usize, t: u64, trials: u64, seed: u64) -> f64 {
    assert!(n >= 1 && trials >= 1);
    if t == 0 {
        return 1.0;
    }
    let mut plus = 0u64;
    for trial in 0..trials {
        let mut src = trial_source(seed, trial);
        let result = ksa_star(ShuffleKind::CyclicToRandom, n, t, &mut src)
            .expect("PRNG source never exhausts");
        if result.deck.sign() == 1 {
            plus += 1;
        }
    }
    plus as f64 / trials as f64
}

/// One row of the randomness-budget comparison.
#[derive(Clone, Debug, Serialize)]
pub struct BitBudgetRow {
    pub scheme: String,
    pub kind: ShuffleKind,
    pub rule: RuleKind,
    pub mean_steps: f64,
    pub mean_bits: f64,
}

/// Mean random-bit consumption of the three perfect-shuffling schemes at
/// deck size `n` (power of two so every draw costs exactly `lg n` bits and
/// the riffle row applies).
pub fn bit_budget_table(n: usize, trials: u64, seed: u64) -> Result<Vec<BitBudgetRow>> {
    if !n.is_power_of_two() {
        return Err(Error::PowerOfTwoRequired { n });
    }
    let rows = [
        ("mironov-ctrt", ShuffleKind::CyclicToRandom, RuleKind::CheckedSet),
        ("klz-ctrt", ShuffleKind::CyclicToRandom, RuleKind::KlzMark),
        ("riffle-sst", ShuffleKind::RiffleInverse, RuleKind::PairSeparation),
    ];
    let mut out = Vec::with_capacity(rows.len());
    for (name, kind, rule) in rows {
        let cfg = TrialConfig { kind, rule, n, trials, seed, workers: 0 };
        let report = run_trials(&cfg)?;
        debug_assert!(
            kind == ShuffleKind::RiffleInverse
                || (report.mean_bits
                    - report.mean_steps * f64::from(bits_for(n) * if kind == ShuffleKind::RandomTranspositions { 2 } else { 1 }))
                .abs()
                    < 1e-9
        );
        out.push(BitBudgetRow {
            scheme: name.to_string(),
            kind,
            rule,
            mean_steps: report.mean_steps,
            mean_bits: report.mean_bits,
        });
    }
    Ok(out)
}
