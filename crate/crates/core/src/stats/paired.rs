//! Paired-proportion tests: McNemar variants and the sign test.
//!
//! Two-sided exact p-values follow the doubling convention
//! `min(1, 2 · min(P(X <= x), P(X >= x)))` with `X ~ Binomial(N, 1/2)`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use super::{normal_two_sided_p, DiscordantCounts, Sidedness};
use crate::error::{Error, Result};

// Up to this N the binomial coefficients and their tail sums are exact in f64.
const EXACT_N: u64 = 52;

fn exact_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c as f64
}

/// `P(X = k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_half_pmf(k: u64, n: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_N {
        exact_binomial(n, k) * 0.5_f64.powi(n as i32)
    } else {
        (ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2).exp()
    }
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_half_cdf(k: u64, n: u64) -> f64 {
    if k >= n {
        return 1.0;
    }
    // sum the shorter side
    if k > n / 2 {
        return 1.0 - binomial_half_cdf(n - k - 1, n);
    }
    if n <= EXACT_N {
        let total: u64 = (0..=k).map(|i| exact_binomial(n, i) as u64).sum();
        total as f64 * 0.5_f64.powi(n as i32)
    } else {
        (0..=k)
            .map(|i| binomial_half_pmf(i, n))
            .sum::<f64>()
            .min(1.0)
    }
}

fn lower_tail(x: u64, n: u64) -> f64 {
    binomial_half_cdf(x, n)
}

fn upper_tail(x: u64, n: u64) -> f64 {
    // P(X >= x) = P(X <= n - x) by symmetry
    binomial_half_cdf(n - x, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarVariant {
    Asymptotic,
    #[default]
    Exact,
    MidP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub variant: McNemarVariant,
    pub p_value: f64,
    /// Set when `n10 + n01 = 0`; the p-value is then defined as 1.
    pub no_discordant: bool,
}

/// Two-sided McNemar test on the discordant cells of a paired table.
pub fn mcnemar_test(counts: &DiscordantCounts, variant: McNemarVariant) -> McNemarResult {
    let n = counts.discordant();
    if n == 0 {
        return McNemarResult {
            variant,
            p_value: 1.0,
            no_discordant: true,
        };
    }
    // symmetric in (n10, n01) by construction
    let low = counts.n10.min(counts.n01);
    let p_value = match variant {
        McNemarVariant::Asymptotic => {
            let z = (counts.n10 as f64 - counts.n01 as f64) / (n as f64).sqrt();
            normal_two_sided_p(z)
        }
        McNemarVariant::Exact => (2.0 * lower_tail(low, n)).min(1.0),
        McNemarVariant::MidP => {
            (2.0 * lower_tail(low, n) - binomial_half_pmf(low, n)).clamp(0.0, 1.0)
        }
    };
    McNemarResult {
        variant,
        p_value,
        no_discordant: false,
    }
}

/// Sign test for `k` positive outcomes out of `n` under `Binomial(n, 1/2)`.
///
/// One-sided tests the upper tail `P(X >= k)`.
pub fn sign_test(k: u64, n: u64, sidedness: Sidedness) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("sign test needs at least one trial"));
    }
    if k > n {
        return Err(Error::domain(format!(
            "positive count {k} exceeds trial count {n}"
        )));
    }
    Ok(match sidedness {
        Sidedness::One => upper_tail(k, n),
        Sidedness::Two => (2.0 * upper_tail(k, n).min(lower_tail(k, n))).min(1.0),
    })
}
