//! Counter-based seeding.
//!
//! Every random quantity in the crate is addressed by `(master seed, domain,
//! index)`: site `i` of an environment, replica `k` of an experiment. Values
//! therefore never depend on evaluation order or thread count, and a longer
//! environment window is always an extension of a shorter one.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used for walk trajectories.
pub type WalkRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain tags keep streams for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Environment = 0x454e_5649,
    Walk = 0x5741_4c4b,
    Meta = 0x4d45_5441,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of substream `index` in `domain` under `master`.
pub fn substream_seed(master: u64, domain: Domain, index: u64) -> u64 {
    let base = mix64(master.wrapping_add(GOLDEN).wrapping_mul(GOLDEN) ^ domain as u64);
    mix64(base ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

pub fn replica_rng(master: u64, domain: Domain, index: u64) -> WalkRng {
    WalkRng::seed_from_u64(substream_seed(master, domain, index))
}

/// Uniform in `[0, 1)` attached to site `i` of the environment with seed `seed`.
#[inline]
pub fn site_uniform(seed: u64, i: i64) -> f64 {
    let key = mix64(seed ^ 0x5349_5445_5f55_4e49);
    let z = mix64(key ^ (i as u64).wrapping_mul(GOLDEN).wrapping_add(GOLDEN));
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
