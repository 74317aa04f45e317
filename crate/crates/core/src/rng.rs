//! Seeded random streams keyed by `(master seed, run index, purpose)`.
//!
//! Each stream is a ChaCha8 generator: the key is derived from the master
//! seed and run index with SplitMix64, and the purpose selects the ChaCha
//! stream id. Environment and policy draws therefore never share state, and
//! the same run index sees the same environment draws under any policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Environment = 1,
    Policy = 2,
    Sampling = 3,
}

/// One SplitMix64 step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master_seed: u64, run: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(run));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(purpose as u64);
    rng
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
