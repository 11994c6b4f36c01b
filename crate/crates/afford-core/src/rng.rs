//! Seed-splitting utilities.
//!
//! Every stochastic decision in the crate draws from a ChaCha stream derived
//! from a root seed plus a fixed list of stream tags. Parallel and serial
//! executions therefore see identical randomness, and training can resume at
//! any step without carrying RNG state around.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer; decorrelates structured tag tuples.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with stream tags into a single substream seed.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    acc
}

/// Deterministic RNG for the given root seed and stream tags.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}

/// Stream tags for the crate's named substreams, so call sites don't collide
/// by accident.
pub mod tag {
    pub const SCENE: u64 = 1;
    pub const VIDEO: u64 = 2;
    pub const APPEARANCE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const TRAIN_STEP: u64 = 6;
    pub const DECAY: u64 = 7;
    pub const SAMPLE: u64 = 8;
    pub const CLASSIFIER: u64 = 9;
    pub const BASELINE: u64 = 10;
}

/// Fills a slice with standard-normal draws.
pub fn fill_normal<T>(rng: &mut ChaCha8Rng, out: &mut [T])
where
    StandardNormal: rand_distr::Distribution<T>,
{
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Uniform draw in `[0, 1)`.
pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}
