//! Per-replication random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed of replication `i`: SplitMix64 applied to `base_seed + i`.
pub fn replication_seed(base_seed: u64, replication: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(replication))
}

/// ChaCha8 stream for replication `i` of an experiment seeded with `base_seed`.
pub fn replication_rng(base_seed: u64, replication: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replication_seed(base_seed, replication))
}
