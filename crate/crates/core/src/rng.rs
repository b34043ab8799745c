//! Counter-based seed splitting.
//!
//! Every random decision in a game is drawn from a stream keyed by
//! `(master seed, trial index, purpose tag)`, so results do not depend on
//! the order in which trials are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type GameRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Deterministic 64-bit seed for one `(master, index, tag)` triple.
pub fn derive_seed(master: u64, index: u64, tag: &str) -> u64 {
    let a = splitmix64(master ^ fnv1a(tag));
    splitmix64(a ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_for(master: u64, index: u64, tag: &str) -> GameRng {
    GameRng::seed_from_u64(derive_seed(master, index, tag))
}

/// Uniform bit.
pub fn fair_coin(rng: &mut GameRng) -> u8 {
    rng.random::<bool>() as u8
}

/// Two distinct indices drawn uniformly without replacement from `0..n`.
pub fn distinct_pair(rng: &mut GameRng, n: usize) -> (usize, usize) {
    assert!(n >= 2, "need at least two examples to draw a challenge pair");
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}
