//! Deterministic random streams.
//!
//! Every simulation run draws from ChaCha8 keyed by the 64-bit base seed
//! (expanded with `SeedableRng::seed_from_u64`) on its own 64-bit stream id,
//! normally the run index. Streams never overlap, so runs can execute on any
//! number of workers and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
