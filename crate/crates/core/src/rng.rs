//! Seeded, stage-splittable random number generation.
//!
//! Every random draw in the library goes through [`stage_rng`]. A stage RNG is
//! a ChaCha8 stream whose 64-bit seed is derived from the user seed and a
//! stage name:
//!
//! ```text
//! stage_seed = splitmix64(seed XOR fnv1a64(stage_name))
//! rng        = ChaCha8Rng::seed_from_u64(stage_seed)
//! ```
//!
//! `fnv1a64` is the standard 64-bit FNV-1a hash over the UTF-8 bytes of the
//! name (offset basis `0xcbf29ce484222325`, prime `0x100000001b3`), and
//! `splitmix64` is the finalizer from Steele et al. (add `0x9e3779b97f4a7c15`,
//! then the two xor-shift-multiply rounds). Any other implementation that
//! reproduces these two functions and ChaCha8's `seed_from_u64` can replay
//! subsample index sets and embedding initializations from a run manifest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(stage.as_bytes()))
}

/// Independent generator for a named pipeline stage.
pub fn stage_rng(seed: u64, stage: &str) -> StageRng {
    ChaCha8Rng::seed_from_u64(stage_seed(seed, stage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn stages_are_independent() {
        let a: u64 = stage_rng(7, "subsample").random();
        let b: u64 = stage_rng(7, "embed").random();
        let c: u64 = stage_rng(7, "subsample").random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
