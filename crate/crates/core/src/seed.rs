//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a master seed, a purpose tag and an index, so that runs are
//! reproducible regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes for which independent random streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Sampling,
    Noise,
    Split,
    Init,
    Batching,
    Repeat,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Sampling => 0x5341_4d50,
            Purpose::Noise => 0x4e4f_4953,
            Purpose::Split => 0x5350_4c54,
            Purpose::Init => 0x494e_4954,
            Purpose::Batching => 0x4241_5443,
            Purpose::Repeat => 0x5245_5045,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for `(purpose, index)` from `master`.
pub fn derive(master: u64, purpose: Purpose, index: u64) -> u64 {
    let a = splitmix64(master ^ purpose.tag().rotate_left(32));
    splitmix64(a ^ splitmix64(index.wrapping_add(purpose.tag())))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    rng(derive(master, purpose, index))
}
