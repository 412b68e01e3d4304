//! Per-trial random streams.
//!
//! Trial `i` of a run with master seed `s` draws from ChaCha8 keyed by `s`
//! on stream `i`, so a trial's randomness depends only on `(s, i)` and not on
//! which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn trial_rng(seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
