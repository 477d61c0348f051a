use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Folds a list of integers into one well-mixed 64-bit seed (SplitMix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        acc ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        acc = acc.wrapping_add(acc << 6).wrapping_add(acc >> 2);
        let mut z = acc;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        acc = z ^ (z >> 31);
    }
    acc
}

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}
