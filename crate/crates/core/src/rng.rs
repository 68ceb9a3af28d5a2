//! Seeded, portable random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived from
//! the user seed, so generating data and training never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const STREAM_TRAIN: u64 = 1;
pub const STREAM_RINGS: u64 = 2;
pub const STREAM_MOONS: u64 = 3;
pub const STREAM_MIXTURE: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `index` into `seed` (SplitMix64 finalizer) so that independent jobs,
/// such as grid-search cells, get unrelated but reproducible seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
