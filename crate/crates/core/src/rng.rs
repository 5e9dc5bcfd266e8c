//! Random streams. Every consumer derives its generator from the user seed and
//! a fixed stream id, so the simulator, the chains and the prediction step
//! never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Chain `k` uses stream `CHAIN_STREAM_BASE + k`.
pub const CHAIN_STREAM_BASE: u64 = 0;
/// Posterior-predictive draws for chain `k` use `PREDICT_STREAM_BASE + k`.
pub const PREDICT_STREAM_BASE: u64 = 1 << 40;
/// Dataset simulation.
pub const SIMULATE_STREAM: u64 = 1 << 41;
/// Marginal-conditional draws in correctness tests.
pub const ORACLE_STREAM: u64 = 1 << 42;

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn chain_rng(seed: u64, chain_id: u64) -> Rng {
    stream_rng(seed, CHAIN_STREAM_BASE + chain_id)
}
