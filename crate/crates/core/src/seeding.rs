//! Splittable seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by
//! `mix(master, purpose)` and positioned on stream `index`. Trajectory `i` of
//! an ensemble therefore draws the same numbers no matter which thread
//! evaluates it or in which order, which is what makes parallel sampling
//! bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Ensemble = 1,
    ClosedLoop = 2,
    Channel = 3,
    Coding = 4,
    Spanning = 5,
    Estimation = 6,
    Custom = 7,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 64-bit key for a `(master, purpose)` pair.
pub fn derive_key(master: u64, purpose: Purpose) -> u64 {
    splitmix64(splitmix64(master) ^ (purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Returns the generator for item `index` of the given purpose.
pub fn stream_rng(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(master, purpose));
    rng.set_stream(index);
    rng
}
