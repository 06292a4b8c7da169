//! Bit-source behavior: tape replay, rejection sampling, key streams.

use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use sst_shuffle::randomness::{bits_for, BitSource, KeyStream, RandomBits, StreamLabel, TapeBits};
use sst_shuffle::Error;

#[test]
fn bits_for_ceil_log2() {
    let cases = [(1usize, 0u32), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4), (1024, 10)];
    for (n, expected) in cases {
        assert_eq!(bits_for(n), expected, "n={n}");
    }
}

#[test]
fn tape_parses_ascii_and_ignores_whitespace() {
    let tape = TapeBits::from_ascii("01 1\n0").unwrap();
    assert_eq!(tape.len(), 4);
    let mut tape = tape;
    let word = tape.next_bits(4).unwrap();
    assert_eq!(word, 0b0110);
    assert_eq!(tape.consumed(), 4);
    assert_eq!(tape.remaining(), 0);

    let err = TapeBits::from_ascii("01x0").unwrap_err();
    match err {
        Error::InvalidTapeChar { found, offset } => {
            assert_eq!(found, 'x');
            assert_eq!(offset, 2);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn next_bits_zero_and_determinism() {
    let mut tape = TapeBits::from_ascii("1010").unwrap();
    assert_eq!(tape.next_bits(0).unwrap(), 0);
    assert_eq!(tape.consumed(), 0);

    let mut a = RandomBits::new(ChaCha20Rng::seed_from_u64(5));
    let mut b = RandomBits::new(ChaCha20Rng::seed_from_u64(5));
    for _ in 0..4 {
        assert_eq!(a.next_bits(8).unwrap(), b.next_bits(8).unwrap());
    }
    assert_eq!(a.consumed(), 32);
}

#[test]
fn next_bits_is_msb_first_composition_of_next_bit() {
    let mut word = RandomBits::new(ChaCha20Rng::seed_from_u64(11));
    let mut bitwise = RandomBits::new(ChaCha20Rng::seed_from_u64(11));
    let got = word.next_bits(13).unwrap();
    let mut assembled = 0u64;
    for _ in 0..13 {
        assembled = (assembled << 1) | bitwise.next_bit().unwrap() as u64;
    }
    assert_eq!(got, assembled);
}

#[test]
fn short_stream_signals_exhaustion() {
    let mut tape = TapeBits::from_ascii("0110").unwrap();
    let err = tape.next_bits(8).unwrap_err();
    assert!(matches!(err, Error::KeyExhausted { .. }));
}

#[test]
fn uniform_index_examples() {
    let mut tape = TapeBits::from_ascii("").unwrap();
    assert_eq!(tape.uniform_index(1).unwrap(), 0);
    assert_eq!(tape.consumed(), 0);

    let mut tape = TapeBits::from_ascii("101").unwrap();
    assert_eq!(tape.uniform_index(8).unwrap(), 5);
    assert_eq!(tape.consumed(), 3);

    // First 3-bit chunk reads 7 >= 6 and is rejected; the second accepts.
    let mut tape = TapeBits::from_ascii("111010").unwrap();
    assert_eq!(tape.uniform_index(6).unwrap(), 2);
    assert_eq!(tape.consumed(), 6);
}

#[test]
fn uniform_index_rejection_is_conditionally_uniform() {
    // Exhaustive enumeration over every 6-bit prefix for n = 6: the 60
    // accepting tapes split 10-10-10-10-10-10, the other 4 exhaust.
    let mut counts = [0u32; 6];
    let mut exhausted = 0u32;
    for word in 0u32..64 {
        let ascii: String = (0..6).map(|b| if (word >> (5 - b)) & 1 == 1 { '1' } else { '0' }).collect();
        let mut tape = TapeBits::from_ascii(&ascii).unwrap();
        match tape.uniform_index(6) {
            Ok(v) => counts[v] += 1,
            Err(Error::KeyExhausted { .. }) => exhausted += 1,
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }
    assert_eq!(counts, [10; 6]);
    assert_eq!(exhausted, 4);
}

#[test]
fn uniform_index_power_of_two_consumes_exactly_lg_n() {
    let mut src = RandomBits::new(ChaCha20Rng::seed_from_u64(3));
    for n in [2usize, 4, 8, 64, 256] {
        let before = src.consumed();
        let v = src.uniform_index(n).unwrap();
        assert!(v < n);
        assert_eq!(src.consumed() - before, u64::from(bits_for(n)));
    }
}

#[test]
fn uniform_index_chi_square() {
    let mut src = RandomBits::new(ChaCha20Rng::seed_from_u64(17));
    let n = 6usize;
    let draws = 120_000u32;
    let mut counts = vec![0u64; n];
    for _ in 0..draws {
        counts[src.uniform_index(n).unwrap()] += 1;
    }
    let expected = f64::from(draws) / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let cutoff = ChiSquared::new((n - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < cutoff, "chi2 {chi2} >= {cutoff}");
}

#[test]
fn tape_replay_reproduces_consumer_output() {
    // Record random bits, then replay the tape twice through the same
    // consumer shape and compare.
    let mut rng = RandomBits::new(ChaCha20Rng::seed_from_u64(23));
    let ascii: String =
        (0..4096).map(|_| if rng.next_bit().unwrap() { '1' } else { '0' }).collect();
    let run = |tape: &mut TapeBits| -> Vec<usize> {
        (0..100).map(|_| tape.uniform_index(6).unwrap()).collect()
    };
    let mut first = TapeBits::from_ascii(&ascii).unwrap();
    let mut second = TapeBits::from_ascii(&ascii).unwrap();
    assert_eq!(run(&mut first), run(&mut second));
}

#[test]
fn key_streams_are_deterministic_and_label_separated() {
    let key = b"0123456789abcdef";
    let labels = [
        StreamLabel::Generic,
        StreamLabel::MaskG1,
        StreamLabel::MaskG2,
        StreamLabel::TransformKey,
        StreamLabel::MacKey,
    ];
    let take = |label: StreamLabel| -> Vec<u8> {
        let mut s = KeyStream::new(key, label);
        (0..16).map(|_| s.next_byte().unwrap()).collect()
    };
    for label in labels {
        assert_eq!(take(label), take(label), "{label:?} not deterministic");
        assert_eq!(KeyStream::new(key, label).label(), label);
    }
    for (a, &la) in labels.iter().enumerate() {
        for &lb in &labels[a + 1..] {
            assert_ne!(take(la), take(lb), "{la:?} and {lb:?} collide");
        }
    }
    // Different keys diverge under the same label.
    let mut other = KeyStream::new(b"0123456789abcdeg", StreamLabel::Generic);
    let other_bytes: Vec<u8> = (0..16).map(|_| other.next_byte().unwrap()).collect();
    assert_ne!(take(StreamLabel::Generic), other_bytes);
}

#[test]
fn finite_key_stream_exhausts() {
    let mut s = KeyStream::with_bit_limit(b"key", StreamLabel::Generic, 12);
    s.next_bits(12).unwrap();
    let err = s.next_bit().unwrap_err();
    assert!(matches!(err, Error::KeyExhausted { consumed: 12 }));

    let mut s = KeyStream::with_bit_limit(b"key", StreamLabel::Generic, 4);
    assert!(matches!(s.next_bits(8), Err(Error::KeyExhausted { .. })));
}

proptest! {
    #[test]
    fn uniform_index_in_range_and_accounts_bits(n in 1usize..200, seed in 0u64..1000) {
        let mut src = RandomBits::new(ChaCha20Rng::seed_from_u64(seed));
        let before = src.consumed();
        let v = src.uniform_index(n).unwrap();
        prop_assert!(v < n);
        let used = src.consumed() - before;
        if n == 1 {
            prop_assert_eq!(used, 0);
        } else {
            // Whole chunks only.
            prop_assert_eq!(used % u64::from(bits_for(n)), 0);
            prop_assert!(used >= u64::from(bits_for(n)));
        }
    }
}
