//! Seed derivation for reproducible sub-streams.
//!
//! Every random decision in the crate flows from an explicit 64-bit seed.
//! Independent stages (noise synthesis, patch placement, weight init,
//! shuffling) derive child seeds from a parent seed and a salt, so streams
//! never overlap and any stage can be re-run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent child seed from `seed` and `salt`.
///
/// splitmix64 finalizer over `seed ^ salt * phi64`; distinct salts yield
/// decorrelated children, and `derive(s, a) == derive(s, b)` only if `a == b`.
pub fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Builds the crate-standard RNG for a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_deterministic_and_salt_sensitive() {
        assert_eq!(derive(42, 7), derive(42, 7));
        assert_ne!(derive(42, 7), derive(42, 8));
        assert_ne!(derive(42, 7), derive(43, 7));
        // A child never trivially equals its parent.
        assert_ne!(derive(42, 0), 42);
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut a = rng(9);
        let mut b = rng(9);
        for _ in 0..8 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }
}
