use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{base_rng, next_u32, threshold, trial_rng, with_workers};
use crate::audit::cross_split_sd;
use crate::error::{Error, Result};
use crate::stats::binomial_reference_sd;

/// Sampling distribution of the cross-split SD of `k` independent
/// Bernoulli(`p`) splits of `n` items each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSdSummary {
    pub p: f64,
    pub n: u64,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub sd_bin: f64,
    pub mean_sd: f64,
    pub max_sd: f64,
    /// `None` when `sd_bin` is zero.
    pub mean_ratio: Option<f64>,
    pub ratio_q025: Option<f64>,
    pub ratio_q975: Option<f64>,
}

pub fn simulate_split_sd(
    p: f64,
    n: u64,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<SplitSdSummary> {
    simulate_split_sd_with(p, n, k, trials, seed, 0)
}

pub fn simulate_split_sd_with(
    p: f64,
    n: u64,
    k: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SplitSdSummary> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if n == 0 || k < 2 || trials == 0 {
        return Err(Error::domain(
            "split-SD simulation needs n >= 1, k >= 2 and trials >= 1",
        ));
    }
    let base = base_rng(seed);
    let t = threshold(p);
    let sds: Vec<f64> = with_workers(workers, || {
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(&base, trial);
                let means: Vec<f64> = (0..k)
                    .map(|_| {
                        let hits: u64 = (0..n).map(|_| u64::from(next_u32(&mut rng) < t)).sum();
                        hits as f64 / n as f64
                    })
                    .collect();
                cross_split_sd(&means).unwrap_or(0.0)
            })
            .collect()
    });
    let sd_bin = binomial_reference_sd(p, n)?;
    let mean_sd = sds.iter().sum::<f64>() / trials as f64;
    let max_sd = sds.iter().copied().fold(0.0, f64::max);
    let (mean_ratio, ratio_q025, ratio_q975) = if sd_bin > 0.0 {
        let mut ratios: Vec<f64> = sds.iter().map(|s| s / sd_bin).collect();
        ratios.sort_by(f64::total_cmp);
        (
            Some(mean_sd / sd_bin),
            Some(quantile_sorted(&ratios, 0.025)),
            Some(quantile_sorted(&ratios, 0.975)),
        )
    } else {
        (None, None, None)
    };
    Ok(SplitSdSummary {
        p,
        n,
        k,
        trials,
        seed,
        sd_bin,
        mean_sd,
        max_sd,
        mean_ratio,
        ratio_q025,
        ratio_q975,
    })
}

// Linear interpolation between order statistics (Hyndman-Fan type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
