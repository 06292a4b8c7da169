//! Block masking: bit-at-a-time reference vs word-level partition rounds.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use sst_shuffle::analysis::uniform_deck;
use sst_shuffle::masking::{decompose_to_riffle_rounds, BitPermutation};
use sst_shuffle::randomness::RandomBits;

fn bench_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("mask/apply");
    for &n_bits in &[128usize, 512, 1024] {
        let mut src = RandomBits::new(ChaCha20Rng::seed_from_u64(11));
        let deck = uniform_deck(n_bits, &mut src).unwrap();
        let perm = BitPermutation::from_deck(&deck).unwrap();
        let dec = decompose_to_riffle_rounds(&perm);
        let block: Vec<u8> = (0..n_bits / 8).map(|i| i as u8).collect();

        group.throughput(Throughput::Bytes((n_bits / 8) as u64));
        group.bench_with_input(BenchmarkId::new("bitwise", n_bits), &block, |b, block| {
            b.iter(|| perm.apply_bits(black_box(block)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rounds", n_bits), &block, |b, block| {
            b.iter(|| dec.apply_bits_fast(black_box(block)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_apply);
criterion_main!(benches);
