//! Monte Carlo validation of the MDE bound and of split-SD sampling.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). The 64-bit seed is
//! expanded into a key once; trial `t` reads from stream `t` of that key, so
//! any trial can be regenerated in isolation and results do not depend on
//! how trials are scheduled across threads. Aggregation counts integers.

mod power;
mod split_sd;
mod sweep;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub use power::{
    simulate_power, simulate_power_with, simulate_trial_counts, trial_rejects, PowerEstimate,
    SimulationSpec, TestVariant,
};
pub use split_sd::{simulate_split_sd, simulate_split_sd_with, SplitSdSummary};
pub use sweep::{
    run_sweep, DeltaSpec, SweepConfig, SweepEntry, SweepReport, SweepRow, SweepTiming,
};

/// Description recorded in output metadata.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha 0.9), key = seed_from_u64(seed), stream = trial index";

const U32_SCALE: f64 = 4_294_967_296.0;

pub(crate) fn base_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn trial_rng(base: &ChaCha8Rng, trial: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(trial);
    rng.set_word_pos(0);
    rng
}

/// Threshold `t` such that `P(u < t) = p` (to 2^-32) for a uniform 32-bit `u`.
pub(crate) fn threshold(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * U32_SCALE).round() as u64
}

#[inline]
pub(crate) fn next_u32(rng: &mut ChaCha8Rng) -> u64 {
    u64::from(rng.next_u32())
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
