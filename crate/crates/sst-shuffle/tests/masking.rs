//! Bit-level masking: permutation plumbing, the partition-round fast path,
//! and the two-sided masked cipher.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use sst_shuffle::masking::{
    apply_bits, apply_bits_fast, decompose_to_riffle_rounds, derive_permutation_from_source,
    derive_permutations, mask_decrypt, mask_encrypt, BitPermutation, IdentityTransform,
    MaskedCipher, RiffleDecomposition, TransformChoice, XorPad, DEFAULT_BLOCK_BITS,
};
use sst_shuffle::randomness::{KeyStream, StreamLabel, TapeBits};
use sst_shuffle::{Error, Permutation};

fn random_perm(n_bits: usize, rng: &mut ChaCha20Rng) -> BitPermutation {
    let mut map: Vec<u32> = (0..n_bits as u32).collect();
    map.shuffle(rng);
    BitPermutation::from_map(map).unwrap()
}

fn random_block(n_bits: usize, rng: &mut ChaCha20Rng) -> Vec<u8> {
    (0..n_bits / 8).map(|_| rng.random()).collect()
}

#[test]
fn block_sizes_are_validated() {
    for ok in [8usize, 16, 128, 1024] {
        assert!(BitPermutation::identity(ok).is_ok());
    }
    for bad in [0usize, 4, 12, 24, 100, 2048] {
        assert!(
            matches!(
                BitPermutation::identity(bad),
                Err(Error::BlockSizeUnsupported { n_bits }) if n_bits == bad
            ),
            "n_bits={bad}"
        );
    }
    assert_eq!(DEFAULT_BLOCK_BITS, 128);
}

#[test]
fn maps_must_be_bijections() {
    assert!(matches!(
        BitPermutation::from_map(vec![0, 0, 2, 3, 4, 5, 6, 7]),
        Err(Error::InvalidDeck { .. })
    ));
    assert!(matches!(
        BitPermutation::from_map(vec![0, 1, 2, 3, 4, 5, 6, 9]),
        Err(Error::InvalidDeck { .. })
    ));
    let perm = BitPermutation::from_map((0..16).rev().collect()).unwrap();
    assert_eq!(perm.n_bits(), 16);
    assert!(!perm.is_identity());
}

#[test]
fn bits_are_addressed_little_endian_within_bytes() {
    // map[i] is the destination of bit i; bit i lives in byte i>>3, bit i&7.
    let mut map: Vec<u32> = (0..16).collect();
    map.swap(0, 8);
    let perm = BitPermutation::from_map(map).unwrap();
    assert_eq!(perm.apply_bits(&[0x01, 0x00]).unwrap(), vec![0x00, 0x01]);
    assert_eq!(perm.apply_bits(&[0x00, 0x01]).unwrap(), vec![0x01, 0x00]);
    // Other bits ride along untouched.
    assert_eq!(perm.apply_bits(&[0x81, 0x10]).unwrap(), vec![0x80, 0x11]);

    let mut map: Vec<u32> = (0..8).collect();
    map.swap(0, 1);
    let perm = BitPermutation::from_map(map).unwrap();
    assert_eq!(perm.apply_bits(&[0x01]).unwrap(), vec![0x02]);

    // Wrong input length is refused with the byte counts.
    let err = perm.apply_bits(&[0x01, 0x02]).unwrap_err();
    assert!(matches!(err, Error::SizeMismatch { expected: 1, got: 2 }));
}

#[test]
fn inverse_undoes_the_permutation() {
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for n_bits in [8usize, 64, 128, 1024] {
        let perm = random_perm(n_bits, &mut rng);
        let inv = perm.inverse();
        assert_eq!(inv.inverse().map(), perm.map());
        for _ in 0..20 {
            let x = random_block(n_bits, &mut rng);
            let y = perm.apply_bits(&x).unwrap();
            assert_eq!(inv.apply_bits(&y).unwrap(), x);
        }
    }
}

#[test]
fn fixed_tape_derives_the_bit_reversal_mask() {
    // Three riffle rounds on eight positions, bits read top-to-bottom per
    // round; all pairs separate at step 3 and the stream is read no further.
    let mut tape = TapeBits::from_ascii("00001111 00110011 01010101").unwrap();
    let (perm, sample) = derive_permutation_from_source(&mut tape, 8).unwrap();
    assert_eq!(sample.steps, 3);
    assert_eq!(sample.bits_used, 24);
    assert_eq!(sample.deck.as_slice(), &[0, 4, 2, 6, 1, 5, 3, 7]);
    assert_eq!(perm.map(), &[0, 4, 2, 6, 1, 5, 3, 7]);
    // That map is bit-reversal on three-bit indices: an involution.
    assert_eq!(perm.inverse().map(), perm.map());
    assert_eq!(perm.apply_bits(&[0x02]).unwrap(), vec![0x10]);

    // An exhausted source surfaces as an error, not a truncated mask.
    let mut short = TapeBits::from_ascii("0000111100").unwrap();
    assert!(matches!(
        derive_permutation_from_source(&mut short, 8),
        Err(Error::KeyExhausted { .. })
    ));
}

#[test]
fn identity_decomposes_into_lg_n_rounds() {
    let perm = BitPermutation::identity(8).unwrap();
    let dec = decompose_to_riffle_rounds(&perm);
    assert_eq!(dec.n_bits(), 8);
    assert_eq!(dec.rounds().len(), 3);
    for x in [[0x00u8], [0xff], [0x5a], [0x01]] {
        assert_eq!(dec.apply_bits_fast(&x).unwrap(), x.to_vec());
    }
}

#[test]
fn word_level_path_matches_bitwise_path() {
    let mut rng = ChaCha20Rng::seed_from_u64(43);
    for n_bits in [8usize, 64, 128, 256, 1024] {
        let lg = n_bits.trailing_zeros() as usize;
        for _ in 0..200 {
            let perm = random_perm(n_bits, &mut rng);
            let dec: RiffleDecomposition = decompose_to_riffle_rounds(&perm);
            assert_eq!(dec.rounds().len(), lg);
            let x = random_block(n_bits, &mut rng);
            let slow = apply_bits(&perm, &x).unwrap();
            let fast = apply_bits_fast(&dec, &x).unwrap();
            assert_eq!(slow, fast, "n_bits={n_bits}");
        }
    }
}

#[test]
fn cipher_roundtrips_on_whole_messages() {
    let cipher = MaskedCipher::new(b"roundtrip key", 128, TransformChoice::XorStream).unwrap();
    assert_eq!(cipher.n_bits(), 128);
    assert_eq!(cipher.block_bytes(), 16);

    let mut rng = ChaCha20Rng::seed_from_u64(47);
    let mut unchanged = 0u32;
    for _ in 0..500 {
        let original: Vec<u8> = (0..48).map(|_| rng.random()).collect();
        let mut data = original.clone();
        mask_encrypt(&cipher, &mut data).unwrap();
        if data == original {
            unchanged += 1;
        }
        mask_decrypt(&cipher, &mut data).unwrap();
        assert_eq!(data, original);
    }
    assert_eq!(unchanged, 0);
}

#[test]
fn identity_core_exposes_the_mask_composition() {
    let mut rng = ChaCha20Rng::seed_from_u64(53);
    let g1 = random_perm(64, &mut rng);
    let g2 = random_perm(64, &mut rng);
    let cipher =
        MaskedCipher::from_parts(g1.clone(), g2.clone(), Box::new(IdentityTransform)).unwrap();
    assert!(cipher.mac_key().is_empty());
    assert_eq!(cipher.setup_steps(), (0, 0));

    for _ in 0..50 {
        let x = random_block(64, &mut rng);
        let mut block = x.clone();
        cipher.encrypt_block(&mut block).unwrap();
        let expected = g2.apply_bits(&g1.apply_bits(&x).unwrap()).unwrap();
        assert_eq!(block, expected);
        cipher.decrypt_block(&mut block).unwrap();
        assert_eq!(block, x);
    }

    let g3 = random_perm(128, &mut rng);
    assert!(matches!(
        MaskedCipher::from_parts(g1, g3, Box::new(IdentityTransform)),
        Err(Error::SizeMismatch { expected: 64, got: 128 })
    ));
}

#[test]
fn key_material_lives_on_separated_streams() {
    let key = b"stream separation";
    let cipher = MaskedCipher::new(key, 128, TransformChoice::Identity).unwrap();

    let masks = derive_permutations(key, 128).unwrap();
    assert_eq!(cipher.g1().map(), masks.g1.map());
    assert_eq!(cipher.g2().map(), masks.g2.map());
    assert_ne!(masks.g1.map(), masks.g2.map());
    assert_eq!(cipher.setup_steps(), (masks.g1_sample.steps, masks.g2_sample.steps));

    let mut mac_stream = KeyStream::new(key, StreamLabel::MacKey);
    let expected: Vec<u8> = (0..32).map(|_| mac_stream.next_byte().unwrap()).collect();
    assert_eq!(cipher.mac_key(), &expected[..]);

    // A neighbouring key produces different masks.
    let other = derive_permutations(b"stream separatioo", 128).unwrap();
    assert_ne!(other.g1.map(), masks.g1.map());
}

#[test]
fn partial_blocks_are_rejected() {
    let cipher = MaskedCipher::new(b"partial", 128, TransformChoice::XorStream).unwrap();
    let mut data = vec![0u8; 17];
    assert!(matches!(
        cipher.encrypt(&mut data),
        Err(Error::SizeMismatch { expected: 32, got: 17 })
    ));
    let mut block = vec![0u8; 15];
    assert!(cipher.encrypt_block(&mut block).is_err());
    let mut empty: Vec<u8> = Vec::new();
    cipher.encrypt(&mut empty).unwrap();
    assert!(empty.is_empty());
}

#[test]
fn blocks_are_independent() {
    let cipher = MaskedCipher::new(b"ecb-style", 128, TransformChoice::XorStream).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(59);
    let message: Vec<u8> = (0..64).map(|_| rng.random()).collect();

    let mut whole = message.clone();
    cipher.encrypt(&mut whole).unwrap();
    for (i, chunk) in message.chunks_exact(16).enumerate() {
        let mut block = chunk.to_vec();
        cipher.encrypt_block(&mut block).unwrap();
        assert_eq!(&whole[i * 16..(i + 1) * 16], &block[..]);
    }
}

#[test]
fn transform_choice_parses_and_serializes() {
    assert_eq!("identity".parse::<TransformChoice>().unwrap(), TransformChoice::Identity);
    assert_eq!("id".parse::<TransformChoice>().unwrap(), TransformChoice::Identity);
    assert_eq!("xor-stream".parse::<TransformChoice>().unwrap(), TransformChoice::XorStream);
    assert_eq!("xor".parse::<TransformChoice>().unwrap(), TransformChoice::XorStream);
    assert!("caesar".parse::<TransformChoice>().is_err());
    assert_eq!(TransformChoice::default(), TransformChoice::XorStream);
    assert_eq!(serde_json::to_string(&TransformChoice::XorStream).unwrap(), "\"xor-stream\"");
}

#[test]
fn xor_pad_is_a_self_inverse_core() {
    let pad = XorPad::new(b"pad key", 16).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(61);
    let original: Vec<u8> = (0..16).map(|_| rng.random()).collect();
    let mut block = original.clone();
    sst_shuffle::masking::BlockTransform::encrypt(&pad, &mut block);
    assert_ne!(block, original);
    sst_shuffle::masking::BlockTransform::decrypt(&pad, &mut block);
    assert_eq!(block, original);
}

#[test]
fn deck_conversion_matches_position_map() {
    let deck = Permutation::from_deck(vec![2, 0, 3, 1, 4, 5, 6, 7]).unwrap();
    let perm = BitPermutation::from_deck(&deck).unwrap();
    // deck[pos] = card, so card 0 sits at position 1, card 1 at 3, ...
    assert_eq!(perm.map(), &[1, 3, 0, 2, 4, 5, 6, 7]);

    let bad = Permutation::from_deck((0..12).collect()).unwrap();
    assert!(matches!(
        BitPermutation::from_deck(&bad),
        Err(Error::BlockSizeUnsupported { n_bits: 12 })
    ));
}
