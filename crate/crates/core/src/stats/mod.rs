//! Closed-form statistical primitives shared by every other module.
//!
//! All probabilities are proportions in `[0, 1]`. Percentage points only
//! appear in the report and CLI layers.

mod interval;
mod mde;
mod normal;
mod paired;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use interval::{
    binomial_reference_sd, chi_square_quantile, sd_sampling_ratio_range, wilson_interval,
    wilson_upper, Interval,
};
pub use mde::{
    mde_bound, mde_coefficient, mde_implicit, required_sample_size, MdeMode, SampleSizeMode,
    PAPER_COMPAT_COEFFICIENT,
};
pub use normal::{normal_cdf, normal_quantile, normal_two_sided_p};
pub use paired::{
    binomial_half_cdf, binomial_half_pmf, mcnemar_test, sign_test, McNemarResult, McNemarVariant,
};

/// One- or two-sided alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    One,
    #[default]
    Two,
}

/// Significance level and target power of a planned test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub power: f64,
    #[serde(default)]
    pub sidedness: Sidedness,
}

impl SignificanceConfig {
    pub fn new(alpha: f64, power: f64) -> Result<Self> {
        Self::with_sidedness(alpha, power, Sidedness::Two)
    }

    pub fn with_sidedness(alpha: f64, power: f64, sidedness: Sidedness) -> Result<Self> {
        let cfg = SignificanceConfig {
            alpha,
            power,
            sidedness,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(Error::validation(format!(
                "power must lie in (0, 1), got {}",
                self.power
            )));
        }
        Ok(())
    }

    /// `z_{1-α/2}` for two-sided tests, `z_{1-α}` for one-sided.
    pub fn z_alpha(&self) -> Result<f64> {
        match self.sidedness {
            Sidedness::Two => normal_quantile(1.0 - self.alpha / 2.0),
            Sidedness::One => normal_quantile(1.0 - self.alpha),
        }
    }

    /// `z_{1-β}` where `1-β` is the target power.
    pub fn z_power(&self) -> Result<f64> {
        normal_quantile(self.power)
    }

    /// The conventional alpha = 0.05, power = 0.80, two-sided design.
    pub fn conventional() -> Self {
        SignificanceConfig {
            alpha: 0.05,
            power: 0.80,
            sidedness: Sidedness::Two,
        }
    }

    pub(crate) fn is_conventional(&self) -> bool {
        self.alpha == 0.05 && self.power == 0.80 && self.sidedness == Sidedness::Two
    }
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self::conventional()
    }
}

/// Inputs to the MDE bound: paired item count, disagreement-rate bound, and test design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdeInputs {
    pub m: u64,
    pub rho_d: f64,
    pub config: SignificanceConfig,
}

impl MdeInputs {
    pub fn new(m: u64, rho_d: f64, config: SignificanceConfig) -> Result<Self> {
        let inputs = MdeInputs { m, rho_d, config };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::validation("paired item count m must be at least 1"));
        }
        if !(self.rho_d > 0.0 && self.rho_d <= 1.0) {
            return Err(Error::validation(format!(
                "disagreement rate must lie in (0, 1], got {}",
                self.rho_d
            )));
        }
        self.config.validate()
    }
}

/// Paired 2x2 contingency counts.
///
/// `n10` counts items correct only under condition A, `n01` items correct
/// only under condition B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscordantCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl DiscordantCounts {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Result<Self> {
        let counts = DiscordantCounts { n11, n10, n01, n00 };
        if counts.m() == 0 {
            return Err(Error::domain("paired counts must cover at least one item"));
        }
        Ok(counts)
    }

    /// Counts with the given number of discordant items split as `n10`/`n01`
    /// and the remainder concordant-correct. Useful when only `(n10, n01, m)`
    /// are known.
    pub fn from_discordant(n10: u64, n01: u64, m: u64) -> Result<Self> {
        let discordant = n10 + n01;
        if discordant > m {
            return Err(Error::domain(format!(
                "discordant count {discordant} exceeds paired total {m}"
            )));
        }
        Self::new(m - discordant, n10, n01, 0)
    }

    pub fn m(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn discordant(&self) -> u64 {
        self.n10 + self.n01
    }

    /// Observed disagreement rate `(n10 + n01) / m`.
    pub fn rho_hat(&self) -> f64 {
        self.discordant() as f64 / self.m() as f64
    }

    /// Observed mean paired difference, `B - A`: `(n01 - n10) / m`.
    pub fn delta_hat(&self) -> f64 {
        (self.n01 as f64 - self.n10 as f64) / self.m() as f64
    }
}
