//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and addressed by
//! `(replicate, worker, purpose)` through the ChaCha stream counter, so draws do
//! not depend on evaluation order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Purpose {
    Gradient = 1,
    Byzantine = 2,
    Estimator = 3,
    Dataset = 4,
    Partition = 5,
    Instance = 6,
}

/// Address of a stream under a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub replicate: u32,
    pub worker: u32,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(replicate: u32, worker: u32, purpose: Purpose) -> Self {
        Self { replicate, worker, purpose }
    }

    fn encode(self) -> u64 {
        ((self.replicate as u64) << 32) | ((self.worker as u64 & 0x00ff_ffff) << 8) | self.purpose as u64
    }
}

/// A single-owner random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id.encode());
        Self { rng }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds from a seed and an index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
