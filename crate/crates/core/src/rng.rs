//! Deterministic seeding.
//!
//! Every trial owns a seed derived from the master seed and the trial's
//! coordinates in the sweep. Each consumer inside a trial (targets, motion,
//! data bits, noise, path phases, random placement) draws from its own
//! ChaCha stream of that seed, so adding draws in one place never shifts the
//! random numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Targets = 1,
    Motion = 2,
    Data = 3,
    Noise = 4,
    Gains = 5,
    Placement = 6,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for trial `trial` at sweep point (`snr_idx`, `targets_idx`).
///
/// The scheme is deliberately not part of the key: all schemes at one sweep
/// point see the same targets, data and noise, which makes scheme
/// comparisons paired.
pub fn trial_seed(master: u64, snr_idx: usize, targets_idx: usize, trial: usize) -> u64 {
    let mut h = splitmix64(master);
    for part in [snr_idx as u64, targets_idx as u64, trial as u64] {
        h = splitmix64(h ^ part);
    }
    h
}

/// Seed for the `index`-th repetition inside a trial (e.g. a tracking step).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
