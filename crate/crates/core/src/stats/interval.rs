use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::normal_quantile;
use crate::error::{Error, Result};

/// A closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_counts(successes: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("binomial interval needs n >= 1"));
    }
    if successes > n {
        return Err(Error::domain(format!(
            "successes ({successes}) exceed trials ({n})"
        )));
    }
    Ok(())
}

fn check_confidence(confidence: f64) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    Ok(())
}

// Wilson score bounds for a given critical value z.
fn wilson_bounds(successes: u64, n: u64, z: f64) -> Interval {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lower = if successes == 0 {
        0.0
    } else {
        (center - half).clamp(0.0, p)
    };
    let upper = if successes == n {
        1.0
    } else {
        (center + half).clamp(p, 1.0)
    };
    Interval { lower, upper }
}

/// Two-sided Wilson score interval without continuity correction.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<Interval> {
    check_counts(successes, n)?;
    check_confidence(confidence)?;
    let z = normal_quantile(1.0 - (1.0 - confidence) / 2.0)?;
    Ok(wilson_bounds(successes, n, z))
}

/// One-sided Wilson upper bound at the given confidence (`z_{confidence}`).
pub fn wilson_upper(successes: u64, n: u64, confidence: f64) -> Result<f64> {
    check_counts(successes, n)?;
    check_confidence(confidence)?;
    let z = normal_quantile(confidence)?;
    Ok(wilson_bounds(successes, n, z).upper)
}

/// Binomial reference SD `sqrt(p(1-p)/n)`.
pub fn binomial_reference_sd(p: f64, n: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "proportion must lie in [0, 1], got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::domain("binomial reference SD needs n >= 1"));
    }
    Ok((p * (1.0 - p) / n as f64).sqrt())
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "chi-square quantile needs p in (0, 1), got {p}"
        )));
    }
    let chi = ChiSquared::new(df).map_err(|e| Error::domain(e.to_string()))?;
    Ok(chi.inverse_cdf(p))
}

/// Central sampling range of `σ̂/σ` for a sample SD over `k` values under a
/// chi-square model with `k - 1` degrees of freedom.
pub fn sd_sampling_ratio_range(k: u64, confidence: f64) -> Result<Interval> {
    if k < 2 {
        return Err(Error::domain(format!(
            "SD sampling range needs k >= 2, got {k}"
        )));
    }
    check_confidence(confidence)?;
    let df = (k - 1) as f64;
    let lo = chi_square_quantile((1.0 - confidence) / 2.0, df)?;
    let hi = chi_square_quantile((1.0 + confidence) / 2.0, df)?;
    Ok(Interval {
        lower: (lo / df).sqrt(),
        upper: (hi / df).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_table_cells() {
        let ci = wilson_interval(362, 500, 0.95).unwrap();
        assert!((ci.lower - 0.683).abs() <= 0.002 && (ci.upper - 0.761).abs() <= 0.002);
        let ci = wilson_interval(126, 500, 0.95).unwrap();
        assert!((ci.lower - 0.216).abs() <= 0.002 && (ci.upper - 0.292).abs() <= 0.002);
    }

    #[test]
    fn wilson_zero_successes() {
        let ci = wilson_interval(0, 10, 0.95).unwrap();
        assert_eq!(ci.lower, 0.0);
        let ci = wilson_interval(10, 10, 0.95).unwrap();
        assert_eq!(ci.upper, 1.0);
    }

    #[test]
    fn wilson_upper_zero_closed_form() {
        let z = normal_quantile(0.95).unwrap();
        let got = wilson_upper(0, 100, 0.95).unwrap();
        assert!((got - z * z / (100.0 + z * z)).abs() < 1e-15);
        assert!((got - 0.026_342_720_783_174_3).abs() < 1e-12);
    }

    #[test]
    fn wilson_upper_above_point_estimate() {
        assert!(wilson_upper(50, 100, 0.95).unwrap() > 0.5);
    }

    #[test]
    fn wilson_errors() {
        assert!(matches!(
            wilson_interval(11, 10, 0.95),
            Err(Error::Domain(_))
        ));
        assert!(matches!(wilson_interval(0, 0, 0.95), Err(Error::Domain(_))));
        assert!(matches!(wilson_upper(1, 10, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn binomial_reference_values() {
        assert!((binomial_reference_sd(0.45, 100).unwrap() - 0.0497).abs() < 5e-5);
        assert!((binomial_reference_sd(0.238, 100).unwrap() - 0.0426).abs() < 5e-5);
        assert_eq!(binomial_reference_sd(0.0, 7).unwrap(), 0.0);
        assert_eq!(binomial_reference_sd(1.0, 7).unwrap(), 0.0);
    }

    #[test]
    fn sd_ratio_range_k5() {
        let r = sd_sampling_ratio_range(5, 0.95).unwrap();
        // scipy.stats.chi2.ppf reference
        assert!((r.lower - 0.348_000_918_493_015_6).abs() < 1e-6);
        assert!((r.upper - 1.669_078_097_474_605_6).abs() < 1e-6);
    }

    #[test]
    fn sd_ratio_range_concentrates_with_k() {
        let k2 = sd_sampling_ratio_range(2, 0.95).unwrap();
        let k5 = sd_sampling_ratio_range(5, 0.95).unwrap();
        let k101 = sd_sampling_ratio_range(101, 0.95).unwrap();
        assert!(k2.lower < k5.lower && k2.upper > k5.upper);
        assert!(k101.lower >= 0.85 && k101.upper <= 1.15);
        assert!(matches!(
            sd_sampling_ratio_range(1, 0.95),
            Err(Error::Domain(_))
        ));
    }
}
