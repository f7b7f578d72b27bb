//! Per-sample seed derivation.
//!
//! Every generated sample owns an RNG stream derived from `(master_seed, sample_index)`
//! alone, so samples can be produced in any order or on any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SampleRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub sample_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, sample_index: u64) -> Self {
        Self {
            master_seed,
            sample_index,
        }
    }

    pub fn seed(&self) -> u64 {
        derive_seed(*self)
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of `(master_seed, sample_index)`.
pub fn derive_seed(spec: SeedSpec) -> u64 {
    let inner = mix64(spec.sample_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    mix64(spec.master_seed ^ inner)
}

/// Independent sub-stream of `seed` identified by `tag`.
pub fn substream(seed: u64, tag: u64) -> u64 {
    derive_seed(SeedSpec::new(seed, tag ^ 0x5EED_0000_0000_0000))
}

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform float in `[0, 1)` drawn from a hash, for decisions that must not consume an RNG.
pub fn unit_from_hash(h: u64) -> f64 {
    (mix64(h) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent SplitMix64 evaluation; any change breaks reproducibility of every dataset.
    const SEED_0_0: u64 = 0x4821_8226_FF3C_D4BF;

    #[test]
    fn zero_spec_is_frozen() {
        assert_eq!(derive_seed(SeedSpec::new(0, 0)), SEED_0_0);
    }

    #[test]
    fn repeated_calls_are_identical() {
        let spec = SeedSpec::new(0xDEAD_BEEF, 17);
        let first = derive_seed(spec);
        for _ in 0..1000 {
            assert_eq!(derive_seed(spec), first);
        }
    }

    #[test]
    fn neighbouring_indices_differ() {
        for m in [0u64, 1, 42, u64::MAX] {
            assert_ne!(derive_seed(SeedSpec::new(m, 0)), derive_seed(SeedSpec::new(m, 1)));
        }
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000 {
            assert!(seen.insert(derive_seed(SeedSpec::new(7, i))));
        }
    }
}
