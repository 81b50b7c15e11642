//! Seed derivation for reproducible, per-run random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate. ChaCha output is stable across
/// platforms and crate versions, which keeps experiment files byte-identical.
pub type SimRng = ChaCha8Rng;

/// Purpose tags mixed into derived seeds so that the network, the sample and
/// the SS weight estimation of one replication never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 1,
    Sampling = 2,
    SuccessiveSampling = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for `stream` of replication `replication` under `base_seed`.
pub fn derive_seed(base_seed: u64, replication: u64, stream: Stream) -> u64 {
    let a = splitmix64(base_seed);
    let b = splitmix64(a ^ replication.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
