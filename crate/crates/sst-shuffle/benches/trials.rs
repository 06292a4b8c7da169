//! Stopping-time batches: sequential loop vs the rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sst_shuffle::shuffles::ShuffleKind;
use sst_shuffle::simulate::{run_trials, run_trials_sequential, TrialConfig};
use sst_shuffle::sst_rules::RuleKind;

fn bench_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trials/ctrt-klz");
    for &n in &[16usize, 64, 256] {
        let cfg = TrialConfig {
            kind: ShuffleKind::CyclicToRandom,
            rule: RuleKind::KlzMark,
            n,
            trials: 1_000,
            seed: 7,
            workers: 0,
        };
        group.bench_with_input(BenchmarkId::new("sequential", n), &cfg, |b, cfg| {
            b.iter(|| run_trials_sequential(black_box(cfg)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| {
            b.iter(|| run_trials(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_trials);
criterion_main!(benches);
