//! Monte Carlo estimates against exact rejection probabilities and closed forms.

use pairmde::mc::*;
use pairmde::stats::*;

fn binom_pmf(n: u64, p: f64) -> Vec<f64> {
    let ln_fact = |k: u64| libm::lgamma(k as f64 + 1.0);
    (0..=n)
        .map(|k| {
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            (ln_fact(n) - ln_fact(k) - ln_fact(n - k)
                + k as f64 * p.ln()
                + (n - k) as f64 * (1.0 - p).ln())
            .exp()
        })
        .collect()
}

// P(reject) by enumerating N ~ Bin(m, rho) and n10 | N ~ Bin(N, p+/rho).
fn exact_rejection(spec: &SimulationSpec) -> f64 {
    let (p_plus, _) = spec.cell_probabilities();
    let z = normal_quantile(1.0 - spec.config.alpha / 2.0).unwrap();
    let m = spec.m;
    let p_n = binom_pmf(m, spec.rho_d);
    let mut total = 0.0;
    for n in 1..=m {
        if p_n[n as usize] < 1e-16 {
            continue;
        }
        let p_x = binom_pmf(n, p_plus / spec.rho_d);
        for x in 0..=n {
            let y = n - x;
            let reject = match spec.test_variant {
                TestVariant::ZNullVariance => (x as f64 - y as f64).abs() / (n as f64).sqrt() > z,
                TestVariant::ZEstimatedVariance => {
                    let d = (x as f64 - y as f64) / m as f64;
                    let var = n as f64 / m as f64 - d * d;
                    if var <= 0.0 {
                        d != 0.0
                    } else {
                        ((m as f64).sqrt() * d / var.sqrt()).abs() > z
                    }
                }
                TestVariant::McnemarExact | TestVariant::McnemarMidP => {
                    let v = if spec.test_variant == TestVariant::McnemarExact {
                        McNemarVariant::Exact
                    } else {
                        McNemarVariant::MidP
                    };
                    let c = DiscordantCounts {
                        n11: 0,
                        n10: x,
                        n01: y,
                        n00: 0,
                    };
                    mcnemar_test(&c, v).p_value <= spec.config.alpha
                }
            };
            if reject {
                total += p_n[n as usize] * p_x[x as usize];
            }
        }
    }
    total
}

const VARIANTS: [TestVariant; 4] = [
    TestVariant::ZNullVariance,
    TestVariant::ZEstimatedVariance,
    TestVariant::McnemarExact,
    TestVariant::McnemarMidP,
];

fn spec(m: u64, rho_d: f64, delta: f64, trials: u64, variant: TestVariant) -> SimulationSpec {
    SimulationSpec {
        m,
        rho_d,
        delta,
        config: SignificanceConfig::conventional(),
        trials,
        seed: 0x5eed,
        test_variant: variant,
    }
}

#[test]
fn rejection_rates_match_exact_enumeration() {
    for variant in VARIANTS {
        for (m, rho, delta) in [
            (100, 0.10, 0.0),
            (100, 0.10, 0.05),
            (500, 0.10, 0.0),
            (500, 0.05, 0.02),
        ] {
            let s = spec(m, rho, delta, 100_000, variant);
            let est = simulate_power(&s).unwrap();
            let exact = exact_rejection(&s);
            let tol = 4.0 * (exact * (1.0 - exact) / s.trials as f64).sqrt();
            assert!(
                (est.rejection_rate - exact).abs() <= tol,
                "{variant:?} m={m} rho={rho} delta={delta}: mc {} exact {exact}",
                est.rejection_rate
            );
        }
    }
}

#[test]
fn size_calibrated_for_large_discordant_totals() {
    for variant in VARIANTS {
        let s = spec(4000, 0.20, 0.0, 100_000, variant);
        let est = simulate_power(&s).unwrap();
        // exact McNemar stays conservative even here
        let slack = if variant == TestVariant::McnemarExact {
            0.01
        } else {
            0.0
        };
        assert!(
            (est.rejection_rate - 0.05).abs() <= 4.0 * est.mc_standard_error + slack,
            "{variant:?}: {}",
            est.rejection_rate
        );
    }
}

#[test]
fn power_monotone_in_effect() {
    let deltas = [0.0, 0.01, 0.02, 0.03, 0.04];
    for variant in VARIANTS {
        let rates: Vec<PowerEstimate> = deltas
            .iter()
            .map(|&d| simulate_power(&spec(500, 0.10, d, 20_000, variant)).unwrap())
            .collect();
        for w in rates.windows(2) {
            let se = (w[0].mc_standard_error.powi(2) + w[1].mc_standard_error.powi(2)).sqrt();
            assert!(
                w[1].rejection_rate + 3.0 * se >= w[0].rejection_rate,
                "{variant:?} {rates:?}"
            );
        }
    }
}

#[test]
fn maximal_effect_almost_always_detected() {
    let est = simulate_power(&spec(500, 0.10, 0.10, 20_000, TestVariant::ZNullVariance)).unwrap();
    assert!(est.rejection_rate > 0.999, "{}", est.rejection_rate);
}

#[test]
fn negative_effects_mirror_positive() {
    let pos = simulate_power(&spec(500, 0.10, 0.03, 20_000, TestVariant::ZNullVariance)).unwrap();
    let neg = simulate_power(&spec(500, 0.10, -0.03, 20_000, TestVariant::ZNullVariance)).unwrap();
    let se = (pos.mc_standard_error.powi(2) + neg.mc_standard_error.powi(2)).sqrt();
    assert!((pos.rejection_rate - neg.rejection_rate).abs() <= 4.0 * se);
}

#[test]
fn infeasible_effect_is_a_domain_error() {
    let s = spec(100, 0.05, 0.06, 10, TestVariant::ZNullVariance);
    assert!(matches!(simulate_power(&s), Err(pairmde::Error::Domain(_))));
}

#[test]
fn split_sd_mean_ratio_matches_c4() {
    // c4(5) = sqrt(2/4) * Gamma(5/2) / Gamma(2)
    let c4 = (0.5f64).sqrt() * libm::tgamma(2.5) / libm::tgamma(2.0);
    assert!((c4 - 0.9399856).abs() < 1e-7);
    let s = simulate_split_sd(0.5, 20_000, 5, 20_000, 9).unwrap();
    assert!(
        (s.mean_ratio.unwrap() - c4).abs() < 0.01,
        "{:?}",
        s.mean_ratio
    );
}

#[test]
fn split_sd_degenerate_p() {
    let s = simulate_split_sd(0.0, 100, 5, 1000, 2).unwrap();
    assert_eq!(s.max_sd, 0.0);
    assert_eq!(s.mean_sd, 0.0);
}

#[test]
fn split_sd_needs_two_splits() {
    assert!(matches!(
        simulate_split_sd(0.4, 100, 1, 10, 0),
        Err(pairmde::Error::Domain(_))
    ));
}
