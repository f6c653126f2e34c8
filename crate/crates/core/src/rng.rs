//! Seed handling.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user's master seed, with an independent stream per task:
//! `stream_rng(seed, stream)` = `ChaCha8Rng::seed_from_u64(seed)` switched to
//! word-stream `stream`. Streams never overlap, so tasks that run
//! concurrently draw the same numbers they would serially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream index for boosting round `round` (0-based), candidate `candidate`
/// (0 for the plain sampler, 0..3 in RGBM mode).
pub fn round_stream(round: usize, candidate: usize) -> u64 {
    ((round as u64) << 2) | candidate as u64
}
