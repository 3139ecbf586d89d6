//! Seed derivation and the world-sampling generator.
//!
//! Every random stream in the crate is keyed by hashing a master seed with
//! a tuple of integers through the SplitMix64 finalizer:
//!
//! ```text
//! h0 = master
//! h_{k+1} = splitmix64(h_k ^ splitmix64(part_k + 0x9E3779B97F4A7C15))
//! ```
//!
//! The resulting 64-bit value seeds a xoshiro256++ generator, whose state is
//! itself expanded from the seed with SplitMix64. Uniform doubles take the top
//! 53 bits of each output: `u = (x >> 11) * 2^-53`, giving `u ∈ [0, 1)`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x` (one step from state `x - GOLDEN`).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and an ordered list of integer keys.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(master, |h, &p| {
        splitmix64(h ^ splitmix64(p.wrapping_add(GOLDEN)))
    })
}

/// xoshiro256++ seeded through SplitMix64.
pub type StreamRng = Xoshiro256PlusPlus;

pub fn stream(seed: u64) -> StreamRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform double in `[0, 1)` from the top 53 bits of one output.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `[lo, hi]`.
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}
