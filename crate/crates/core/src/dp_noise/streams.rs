//! Random stream layout.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and selected by
//! a 64-bit stream id, so meter `k` always sees the same sequence no matter how
//! many other meters exist or in which order they are processed.
//!
//! | stream id          | consumer                      |
//! |--------------------|-------------------------------|
//! | `meter_id`         | meter-side noise for that meter |
//! | `u64::MAX`         | grid utility noise            |
//! | `u64::MAX - 1`     | synthetic load generator      |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Meter(u32),
    Utility,
    Synthesis,
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Meter(id) => u64::from(id),
            Stream::Utility => u64::MAX,
            Stream::Synthesis => u64::MAX - 1,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Child seed for the `index`-th independent run of a sweep (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
