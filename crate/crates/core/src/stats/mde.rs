//! Minimum detectable effect for paired binary comparisons.
//!
//! The conservative bound is `(z_α + z_β) · sqrt(ρ_d / m)`, where the null
//! variance `ρ_d` stands in for the exact paired variance `ρ_d - δ²`.

use serde::{Deserialize, Serialize};

use super::{MdeInputs, SignificanceConfig};
use crate::error::{Error, Result};

/// Coefficient used by the published sample-size table at alpha = 0.05,
/// power = 0.80 (two-sided).
pub const PAPER_COMPAT_COEFFICIENT: f64 = 2.80;

const IMPLICIT_TOL: f64 = 1e-10;
const IMPLICIT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MdeMode {
    /// `z_{1-α/2} + z_{1-β}` from exact quantiles.
    #[default]
    ExactQuantile,
    /// Fixed coefficient 2.80 at the conventional design; exact quantiles otherwise.
    PaperCompat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSizeMode {
    /// Exact quantiles, rounded up.
    #[default]
    ConservativeCeil,
    /// Coefficient 2.80, rounded half away from zero (reproduces the printed table).
    PaperCompat,
}

/// The `z_α + z_β` multiplier for a design under the given mode.
pub fn mde_coefficient(config: &SignificanceConfig, mode: MdeMode) -> Result<f64> {
    config.validate()?;
    match mode {
        MdeMode::PaperCompat if config.is_conventional() => Ok(PAPER_COMPAT_COEFFICIENT),
        _ => Ok(config.z_alpha()? + config.z_power()?),
    }
}

/// Conservative paired MDE `δ*`.
pub fn mde_bound(inputs: &MdeInputs, mode: MdeMode) -> Result<f64> {
    inputs.validate()?;
    let coef = mde_coefficient(&inputs.config, mode)?;
    Ok(coef * (inputs.rho_d / inputs.m as f64).sqrt())
}

/// MDE under the alternative-variance approximation.
///
/// Solves `δ√m = z_α√ρ + z_β√(ρ - δ²)` on `(0, √ρ]`. Fixed-point iteration
/// from the conservative bound, with bisection if the iteration stalls or
/// leaves the interval.
pub fn mde_implicit(inputs: &MdeInputs) -> Result<f64> {
    inputs.validate()?;
    let z_a = inputs.config.z_alpha()?;
    let z_b = inputs.config.z_power()?;
    let rho = inputs.rho_d;
    let sqrt_m = (inputs.m as f64).sqrt();
    let upper = rho.sqrt();

    let residual = |d: f64| d * sqrt_m - z_a * rho.sqrt() - z_b * (rho - d * d).max(0.0).sqrt();

    // f is increasing when z_b >= 0; a root needs f(0) < 0 <= f(√ρ).
    let f_lo = residual(0.0);
    let f_hi = residual(upper);
    if !(f_lo < 0.0 && f_hi >= 0.0) {
        return Err(Error::Numerical(format!(
            "no implicit MDE root on (0, sqrt(rho)] for m={}, rho_d={}, alpha={}, power={}",
            inputs.m, rho, inputs.config.alpha, inputs.config.power
        )));
    }

    let step = |d: f64| (z_a * rho.sqrt() + z_b * (rho - d * d).max(0.0).sqrt()) / sqrt_m;
    let mut d = mde_bound(inputs, MdeMode::ExactQuantile)?.min(upper);
    for _ in 0..IMPLICIT_MAX_ITER {
        let next = step(d);
        if !(next > 0.0 && next <= upper) {
            break;
        }
        if (next - d).abs() < IMPLICIT_TOL {
            return Ok(next);
        }
        d = next;
    }

    let (mut lo, mut hi) = (0.0_f64, upper);
    for _ in 0..IMPLICIT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < IMPLICIT_TOL {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Numerical(format!(
        "implicit MDE did not converge for m={}, rho_d={}, alpha={}, power={}",
        inputs.m, rho, inputs.config.alpha, inputs.config.power
    )))
}

/// Paired item count needed to resolve an effect `delta` at disagreement `rho_d`.
// negated comparisons also reject NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn required_sample_size(
    delta: f64,
    rho_d: f64,
    config: &SignificanceConfig,
    mode: SampleSizeMode,
) -> Result<u64> {
    config.validate()?;
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "effect size must be positive, got {delta}"
        )));
    }
    if !(rho_d <= 1.0) {
        return Err(Error::domain(format!(
            "disagreement rate must be at most 1, got {rho_d}"
        )));
    }
    if delta > rho_d {
        return Err(Error::domain(format!(
            "effect size {delta} exceeds disagreement rate {rho_d}; |E[D]| <= Pr(D != 0)"
        )));
    }
    let (coef, round): (f64, fn(f64) -> f64) = match mode {
        SampleSizeMode::ConservativeCeil => {
            (mde_coefficient(config, MdeMode::ExactQuantile)?, f64::ceil)
        }
        SampleSizeMode::PaperCompat => (mde_coefficient(config, MdeMode::PaperCompat)?, f64::round),
    };
    let raw = coef * coef * rho_d / (delta * delta);
    let m = round(raw);
    if !m.is_finite() || m > u64::MAX as f64 {
        return Err(Error::Numerical(format!(
            "sample size overflow (raw {raw})"
        )));
    }
    Ok((m as u64).max(1))
}
