//! Deterministic seed derivation. Every random decision in the pipeline draws
//! from a ChaCha stream whose seed is derived from the run seed plus a textual
//! tag, so independent stages never share or reorder random state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to whiten derived seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from a root seed and a tag. Stable across runs and
/// platforms; distinct tags give independent streams.
pub fn derive(root: u64, tag: &str) -> u64 {
    splitmix64(root ^ fnv1a(tag.as_bytes()))
}

/// A reproducible generator for the given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A reproducible generator for a derived child seed.
pub fn derived_rng(root: u64, tag: &str) -> ChaCha8Rng {
    rng_from_seed(derive(root, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::format;
    use rand::RngExt;

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive(42, "init"), derive(42, "init"));
        let mut a = derived_rng(42, "init");
        let mut b = derived_rng(42, "init");
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn distinct_tags_and_roots_give_distinct_seeds() {
        let mut seen = BTreeSet::new();
        for root in 0..8u64 {
            for i in 0..32 {
                seen.insert(derive(root, &format!("tag/{i}")));
            }
        }
        assert_eq!(seen.len(), 8 * 32);
    }

    #[test]
    fn empty_tag_differs_from_root() {
        assert_ne!(derive(7, ""), 7);
        assert_ne!(derive(7, ""), derive(7, "x"));
    }
}
