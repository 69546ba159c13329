//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit seed. Ensembles derive one
//! independent stream per run: the master seed initialises a ChaCha8 key via
//! `seed_from_u64`, and the run index selects the ChaCha stream number. The
//! scheme is stable: the same `(master, index)` always yields the same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}
