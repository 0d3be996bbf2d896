//! Deterministic RNG stream derivation.
//!
//! Every disorder realization draws from its own stream, derived from
//! `(master seed, realization index)` by the SplitMix64 mixer below. Adding
//! realizations to a run never perturbs the streams of earlier ones, and
//! results are independent of how realizations are distributed over workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Used as a 64-bit mixer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for realization `index` of a run with the given master seed.
///
/// The stream seed is `splitmix64(splitmix64(master) ^ splitmix64(index + 1))`;
/// the double mixing keeps nearby indices statistically uncorrelated.
pub fn realization_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(master_seed) ^ splitmix64(index.wrapping_add(1)));
    ChaCha8Rng::seed_from_u64(s)
}

/// A named substream, for operations that need several independent streams
/// per realization (e.g. potential draws vs. matrix draws).
pub fn substream_rng(master_seed: u64, index: u64, tag: u64) -> ChaCha8Rng {
    let s = splitmix64(
        splitmix64(master_seed)
            ^ splitmix64(index.wrapping_add(1))
            ^ splitmix64(tag ^ 0xA5A5_A5A5_0000_0001),
    );
    ChaCha8Rng::seed_from_u64(s)
}
