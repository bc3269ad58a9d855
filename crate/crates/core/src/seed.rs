//! Deterministic seed derivation.
//!
//! Every random draw in a simulation is keyed by a 64-bit seed obtained by
//! mixing a parent seed with small integer coordinates. The mixer is the
//! SplitMix64 finalizer, so the mapping is stable across platforms and
//! releases, and adding a new stream never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub const fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and an ordered list of coordinates.
pub fn derive(parent: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(parent), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Seed of trial `trial_index` at sweep point `power_index`.
pub fn trial_seed(master_seed: u64, power_index: usize, trial_index: usize) -> u64 {
    derive(master_seed, &[power_index as u64, trial_index as u64])
}

/// Named sub-streams of a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Shadowing = 2,
    Channel = 3,
    Bits = 4,
    Noise = 5,
    Frame = 6,
}

pub fn stream_seed(trial: u64, stream: Stream) -> u64 {
    derive(trial, &[stream as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_coordinate_sensitive() {
        assert_eq!(trial_seed(7, 0, 0), trial_seed(7, 0, 0));
        assert_ne!(trial_seed(7, 0, 1), trial_seed(7, 1, 0));
        assert_ne!(trial_seed(7, 0, 0), trial_seed(8, 0, 0));
        assert_ne!(stream_seed(1, Stream::Bits), stream_seed(1, Stream::Noise));
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of SplitMix64 seeded with 0.
        assert_eq!(mix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
