//! Counter-keyed random streams.
//!
//! Trials are grouped in fixed-size chunks; chunk `c` draws from ChaCha stream
//! `c` of the run seed, so results do not depend on how chunks are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const CHUNK_SIZE: u64 = 1 << 14;

pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Splits `n` trials into `(chunk index, trials in chunk)` pairs.
pub(crate) fn chunks(n: u64) -> impl Iterator<Item = (u64, u64)> {
    let count = n.div_ceil(CHUNK_SIZE);
    (0..count).map(move |c| (c, CHUNK_SIZE.min(n - c * CHUNK_SIZE)))
}
