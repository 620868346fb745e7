//! Seeded, splittable random streams.
//!
//! Every random draw in the crate flows from a `(seed, domain, index)` triple
//! so that parallel trials, independent parties and repeated invocations all
//! see the same bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream domains. Each party or purpose gets its own tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Client = 1,
    Referee = 2,
    Server = 3,
    Schedule = 4,
    Shots = 5,
    Attack = 6,
    Trial = 7,
    Init = 8,
    Calibration = 9,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain as u64)));
    rng.set_stream(splitmix(index.wrapping_add(domain as u64)));
    rng
}

/// Derive a child seed, for handing a whole sub-computation its own seed.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix(splitmix(seed ^ (domain as u64).rotate_left(17)) ^ index)
}
