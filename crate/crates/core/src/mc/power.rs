use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{base_rng, next_u32, threshold, trial_rng, with_workers};
use crate::error::{Error, Result};
use crate::stats::{mcnemar_test, DiscordantCounts, McNemarVariant, Sidedness, SignificanceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestVariant {
    /// `(n10 - n01) / sqrt(n10 + n01)`.
    ZNullVariance,
    /// `sqrt(m) · D̄ / sqrt(ρ̂ - D̄²)`.
    ZEstimatedVariance,
    McnemarExact,
    McnemarMidP,
}

impl TestVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestVariant::ZNullVariance => "z-null-variance",
            TestVariant::ZEstimatedVariance => "z-estimated-variance",
            TestVariant::McnemarExact => "mcnemar-exact",
            TestVariant::McnemarMidP => "mcnemar-mid-p",
        }
    }
}

/// One power (or size) simulation.
///
/// Items draw `D = +1` (A only correct) with probability `(ρ + δ)/2`,
/// `D = -1` with `(ρ - δ)/2`, and `D = 0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub m: u64,
    pub rho_d: f64,
    pub delta: f64,
    #[serde(flatten)]
    pub config: SignificanceConfig,
    pub trials: u64,
    pub seed: u64,
    pub test_variant: TestVariant,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.m == 0 {
            return Err(Error::domain("simulation needs m >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::domain("simulation needs at least one trial"));
        }
        let (p_plus, p_minus) = self.cell_probabilities();
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !(in_unit(self.rho_d) && in_unit(p_plus) && in_unit(p_minus)) {
            return Err(Error::domain(format!(
                "cell probabilities out of [0, 1]: rho_d={}, delta={} give p+={p_plus}, p-={p_minus}",
                self.rho_d, self.delta
            )));
        }
        if matches!(
            self.test_variant,
            TestVariant::McnemarExact | TestVariant::McnemarMidP
        ) && self.config.sidedness == Sidedness::One
        {
            return Err(Error::domain("McNemar variants are two-sided only"));
        }
        Ok(())
    }

    /// `(p₊, p₋)`; `p₀ = 1 - ρ_d`.
    pub fn cell_probabilities(&self) -> (f64, f64) {
        (
            (self.rho_d + self.delta) / 2.0,
            (self.rho_d - self.delta) / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub rejections: u64,
    pub trials: u64,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
}

impl PowerEstimate {
    fn from_counts(rejections: u64, trials: u64) -> Self {
        let r = rejections as f64 / trials as f64;
        PowerEstimate {
            rejections,
            trials,
            rejection_rate: r,
            mc_standard_error: (r * (1.0 - r) / trials as f64).sqrt(),
        }
    }
}

struct Decider {
    variant: TestVariant,
    m: f64,
    z_crit: f64,
    sidedness: Sidedness,
    alpha: f64,
    // largest min(n10, n01) that rejects, per discordant total; -1 = never
    crit: Vec<i64>,
}

impl Decider {
    fn new(spec: &SimulationSpec) -> Result<Self> {
        let crit = match spec.test_variant {
            TestVariant::McnemarExact => {
                critical_table(spec.m, spec.config.alpha, McNemarVariant::Exact)
            }
            TestVariant::McnemarMidP => {
                critical_table(spec.m, spec.config.alpha, McNemarVariant::MidP)
            }
            _ => Vec::new(),
        };
        Ok(Decider {
            variant: spec.test_variant,
            m: spec.m as f64,
            z_crit: spec.config.z_alpha()?,
            sidedness: spec.config.sidedness,
            alpha: spec.config.alpha,
            crit,
        })
    }

    fn z_rejects(&self, z: f64) -> bool {
        match self.sidedness {
            Sidedness::Two => z.abs() > self.z_crit,
            Sidedness::One => z > self.z_crit,
        }
    }

    fn rejects(&self, n10: u64, n01: u64) -> bool {
        let discordant = n10 + n01;
        // no discordant pairs: no evidence against H0
        if discordant == 0 {
            return false;
        }
        match self.variant {
            TestVariant::ZNullVariance => {
                let z = (n10 as f64 - n01 as f64) / (discordant as f64).sqrt();
                self.z_rejects(z)
            }
            TestVariant::ZEstimatedVariance => {
                let d_bar = (n10 as f64 - n01 as f64) / self.m;
                let var = discordant as f64 / self.m - d_bar * d_bar;
                if var <= 0.0 {
                    return self.z_rejects(d_bar.signum() * f64::INFINITY);
                }
                self.z_rejects(self.m.sqrt() * d_bar / var.sqrt())
            }
            TestVariant::McnemarExact | TestVariant::McnemarMidP => {
                let low = n10.min(n01) as i64;
                match self.crit.get(discordant as usize) {
                    Some(&c) => low <= c,
                    None => {
                        let v = if self.variant == TestVariant::McnemarExact {
                            McNemarVariant::Exact
                        } else {
                            McNemarVariant::MidP
                        };
                        let counts = DiscordantCounts {
                            n11: 0,
                            n10,
                            n01,
                            n00: 0,
                        };
                        mcnemar_test(&counts, v).p_value <= self.alpha
                    }
                }
            }
        }
    }
}

// For each discordant total N <= m, the largest c <= N/2 whose two-sided
// p-value at (c, N - c) is <= alpha. The p-value grows with c on [0, N/2]
// and the critical value moves by small steps in N, so it is tracked
// incrementally.
fn critical_table(m: u64, alpha: f64, variant: McNemarVariant) -> Vec<i64> {
    let p_at = |c: u64, n: u64| {
        let counts = DiscordantCounts {
            n11: 0,
            n10: c,
            n01: n - c,
            n00: 0,
        };
        mcnemar_test(&counts, variant).p_value
    };
    let mut table = Vec::with_capacity(m as usize + 1);
    let mut c: i64 = -1;
    for n in 0..=m {
        if n == 0 {
            table.push(-1);
            continue;
        }
        let half = (n / 2) as i64;
        c = c.min(half);
        while c >= 0 && p_at(c as u64, n) > alpha {
            c -= 1;
        }
        while c < half && p_at((c + 1) as u64, n) <= alpha {
            c += 1;
        }
        table.push(c);
    }
    table
}

/// Discordant counts of one trial: `(n10, n01)` packed into [`DiscordantCounts`].
pub fn simulate_trial_counts(spec: &SimulationSpec, trial: u64) -> Result<DiscordantCounts> {
    spec.validate()?;
    let base = base_rng(spec.seed);
    let (n10, n01) = draw_trial(spec, &base, trial);
    let discordant = n10 + n01;
    DiscordantCounts::new(spec.m - discordant, n10, n01, 0)
}

fn draw_trial(spec: &SimulationSpec, base: &rand_chacha::ChaCha8Rng, trial: u64) -> (u64, u64) {
    let (p_plus, p_minus) = spec.cell_probabilities();
    let t_plus = threshold(p_plus);
    let t_disc = threshold(p_plus + p_minus).max(t_plus);
    let mut rng = trial_rng(base, trial);
    let (mut n10, mut n01) = (0u64, 0u64);
    for _ in 0..spec.m {
        let u = next_u32(&mut rng);
        n10 += u64::from(u < t_plus);
        n01 += u64::from(u >= t_plus && u < t_disc);
    }
    (n10, n01)
}

/// Whether the spec's test rejects on a given trial.
pub fn trial_rejects(spec: &SimulationSpec, trial: u64) -> Result<bool> {
    let decider = Decider::new(spec)?;
    let c = simulate_trial_counts(spec, trial)?;
    Ok(decider.rejects(c.n10, c.n01))
}

/// Empirical rejection rate using the global rayon pool.
pub fn simulate_power(spec: &SimulationSpec) -> Result<PowerEstimate> {
    simulate_power_with(spec, 0)
}

/// Empirical rejection rate on `workers` threads (`0` = global pool).
/// The result is identical for every worker count.
pub fn simulate_power_with(spec: &SimulationSpec, workers: usize) -> Result<PowerEstimate> {
    spec.validate()?;
    let decider = Decider::new(spec)?;
    let base = base_rng(spec.seed);
    let rejections = with_workers(workers, || {
        (0..spec.trials)
            .into_par_iter()
            .filter(|&t| {
                let (n10, n01) = draw_trial(spec, &base, t);
                decider.rejects(n10, n01)
            })
            .count() as u64
    });
    Ok(PowerEstimate::from_counts(rejections, spec.trials))
}
