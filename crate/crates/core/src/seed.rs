//! Counter-based seed derivation.
//!
//! A master seed fans out into independent per-trial seeds by hashing
//! `(master, stream, index)`. Trials can therefore run in any order, on any
//! thread, and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::C64;

pub type SimRng = ChaCha8Rng;

/// Named seed streams so that different uses of the master seed never collide.
pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SCHEDULE: u64 = 3;
    pub const TRAINING: u64 = 4;
    pub const POWER: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws from CN(0, variance): real and imaginary parts are independent
/// N(0, variance / 2).
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * scale, im * scale)
}
