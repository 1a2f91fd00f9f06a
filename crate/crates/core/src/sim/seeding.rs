//! Counter-based random streams: every `(master seed, trial, stream)`
//! triple owns an independent ChaCha stream, so results do not depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Initial state, process and measurement noise.
    Plant = 0,
    /// Uniform draws deciding packet loss.
    Channel = 1,
    /// Block-fading gains.
    Fading = 2,
}

/// Trials must stay below `2^62`.
pub fn stream_rng(master: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    debug_assert!(trial < 1 << 62);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial << 2) | stream as u64);
    rng
}
