//! Seedable pseudo-random streams.
//!
//! Every random consumer in the crate draws from [`Rng`], which is
//! xoshiro256** (Blackman & Vigna) seeded by expanding a `u64` through
//! SplitMix64:
//!
//! ```text
//! splitmix64(x): x += 0x9E3779B97F4A7C15
//!                z = x
//!                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                return z ^ (z >> 31)
//! state[i] = splitmix64 output i, i = 0..3
//!
//! next():        result = rotl(s1 * 5, 7) * 9
//!                t = s1 << 17
//!                s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
//!                s2 ^= t;  s3 = rotl(s3, 45)
//! ```
//!
//! Uniform doubles are `(next() >> 11) * 2^-53`. Independent sub-streams
//! (per epoch, per sample) come from [`derive_seed`], so results do not
//! depend on how work is scheduled across threads.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub use rand::RngCore;

/// The crate-wide PRNG.
pub type Rng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index into a new seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
}

/// Uniform double in `[0, 1)`.
pub fn uniform(rng: &mut Rng) -> f64 {
    rng.gen::<f64>()
}

/// Uniform double in `[lo, hi)`.
pub fn uniform_range(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal draw.
pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Fisher-Yates shuffle driven by [`Rng`].
pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
