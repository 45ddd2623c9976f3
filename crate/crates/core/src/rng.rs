//! Reproducible per-trial random streams.
//!
//! Every trial owns an independent ChaCha8 stream: the 256-bit key is
//! expanded from `master_seed` (PCG32 expansion of `seed_from_u64`) and the
//! 64-bit stream id is the trial index. A trial therefore draws the same
//! numbers no matter which worker thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// The random stream of trial `trial` under `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Plain seeded stream (stream 0), for one-off draws.
pub fn seeded(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}
