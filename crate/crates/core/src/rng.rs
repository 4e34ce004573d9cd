//! Counter-based RNG streams.
//!
//! Every random draw in the crate comes from a stream keyed by a master seed
//! and a tuple of counters (purpose tag, replicate, region, day). Streams are
//! independent of evaluation order, so parallel and sequential runs produce
//! identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint.
pub mod tag {
    pub const SIMULATE: u64 = 0x5349_4d55;
    pub const FORECAST: u64 = 0x464f_5245;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit stream seed from a master seed and a counter tuple.
pub fn stream_seed(master: u64, counters: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for (pos, &c) in counters.iter().enumerate() {
        s = splitmix64(s ^ splitmix64(c.wrapping_add((pos as u64 + 1).wrapping_mul(GOLDEN))));
    }
    s
}

/// RNG for one `(master, counters...)` stream.
pub fn stream(master: u64, counters: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, counters))
}
