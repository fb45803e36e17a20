//! Independent random streams derived from one master seed.
//!
//! Every consumer draws from its own ChaCha stream keyed by the master seed
//! and a fixed stream id, so changing how much one subsystem draws never
//! shifts another subsystem's numbers. In particular every tracker variant
//! sees the same movement data for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Movement = 0,
    Channel = 1,
    Protocol = 2,
    Tracker = 3,
    Oracle = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
