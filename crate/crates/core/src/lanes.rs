//! Seed derivation.
//!
//! Every random draw of a search is bound to its logical identity (run seed,
//! sampling round, global draw index) rather than to whichever worker
//! happens to execute it. Draw seeds come from a SplitMix64 counter, so a
//! lane for draw index `a` is a single `u64` from which the seeds of draws
//! `a, a + 1, …` follow.
//!
//! Per-draw generators are ChaCha8 seeded with [`SeedableRng::seed_from_u64`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random stream in the crate.
pub type DrawRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of `(seed, a, b)`.
pub fn combine(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(seed ^ mix64(a.wrapping_add(GOLDEN))).wrapping_add(mix64(b ^ GOLDEN.rotate_left(17))))
}

const ROUND_TAG: u64 = 1;
const ALLOCATION_TAG: u64 = 2;

/// Base lane of sampling round `round` (draw index 0).
pub fn round_lane(run_seed: u64, round: u64) -> u64 {
    combine(run_seed, round, ROUND_TAG)
}

/// Seed of the multinomial allocation of round `round`.
pub fn allocation_seed(run_seed: u64, round: u64) -> u64 {
    combine(run_seed, round, ALLOCATION_TAG)
}

/// Lane whose first draw is draw `offset` of `lane`.
pub fn advance(lane: u64, offset: u64) -> u64 {
    lane.wrapping_add(offset.wrapping_mul(GOLDEN))
}

/// Seed of draw `index` within `lane`.
pub fn draw_seed(lane: u64, index: u64) -> u64 {
    mix64(advance(lane, index.wrapping_add(1)))
}

pub fn draw_rng(lane: u64, index: u64) -> DrawRng {
    DrawRng::seed_from_u64(draw_seed(lane, index))
}
