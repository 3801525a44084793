//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, replica, channel, block)`. The seed keys the cipher, the replica
//! and channel select one of the 2^64 independent cipher streams, and the
//! block selects a disjoint window of that stream. Streams never depend on
//! how many draws another stream consumed, so replicas and Harris channels
//! are reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel ids used by the engines. Harris channels occupy `HARRIS_BASE..`.
pub mod channel {
    pub const GILLESPIE: u16 = 0;
    pub const INITIAL: u16 = 1;
    /// Draws made outside the engines, such as random test configurations.
    pub const AUX: u16 = 2;
    pub const HARRIS_BASE: u16 = 16;
}

/// Words reserved per block; 2^40 words is far more than any chunk consumes.
const BLOCK_WORDS_LOG2: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(seed: u64, replica: u64) -> Self {
        assert!(replica < (1 << 48), "replica id must fit in 48 bits");
        Self { seed, replica }
    }

    /// Key for another replica under the same seed.
    pub fn with_replica(self, replica: u64) -> Self {
        Self::new(self.seed, replica)
    }

    pub fn rng(&self, channel: u16, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.replica << 16) | u64::from(channel));
        rng.set_word_pos(u128::from(block) << BLOCK_WORDS_LOG2);
        rng
    }
}
