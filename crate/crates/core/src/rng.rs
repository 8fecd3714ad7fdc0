//! Reproducible random streams.
//!
//! A stream is addressed by `(seed, stream_id)` and backed by ChaCha8 with the
//! stream id selecting the ChaCha stream, so the draw sequence is identical on
//! every platform and independent of which thread consumes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream labelled by `tag`. Children of distinct parents or with
    /// distinct tags do not overlap in practice.
    pub fn substream(&self, tag: u64) -> RngStream {
        let mixed = splitmix64(splitmix64(self.seed) ^ self.stream_id.rotate_left(32));
        RngStream {
            seed: mixed,
            stream_id: tag,
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
