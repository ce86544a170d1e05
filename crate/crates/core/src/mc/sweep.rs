use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{simulate_power_with, PowerEstimate, SimulationSpec, TestVariant, RNG_DESCRIPTION};
use crate::error::{Error, Result};
use crate::stats::{mde_bound, MdeInputs, MdeMode, Sidedness, SignificanceConfig};

/// Effect size of a sweep entry: a literal value or the MDE bound of the entry's design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Value(f64),
    AtMde { at_mde: MdeMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub m: u64,
    pub rho_d: f64,
    pub delta: DeltaSpec,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default)]
    pub sidedness: Option<Sidedness>,
    pub trials: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub test_variant: TestVariant,
}

/// A list of simulations. Entries without their own seed derive one from
/// the sweep seed and their position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub entries: Vec<SweepEntry>,
}

impl SweepConfig {
    /// Parse JSON, or TOML when `toml` is set.
    pub fn parse(text: &str, toml: bool) -> Result<Self> {
        if toml {
            ::toml::from_str(text).map_err(|e| Error::parse(0, format!("sweep config: {e}")))
        } else {
            serde_json::from_str(text)
                .map_err(|e| Error::parse(e.line(), format!("sweep config: {e}")))
        }
    }

    /// Resolve every entry into a concrete spec. `seed_override` replaces the sweep seed.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Vec<SimulationSpec>> {
        let sweep_seed = seed_override.or(self.seed);
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let seed = match (e.seed, sweep_seed) {
                    (Some(s), _) => s,
                    (None, Some(s)) => derive_seed(s, i as u64),
                    (None, None) => {
                        return Err(Error::validation(format!(
                            "sweep entry {i} has no seed and no sweep seed was given"
                        )))
                    }
                };
                let conventional = SignificanceConfig::conventional();
                let config = SignificanceConfig::with_sidedness(
                    e.alpha.unwrap_or(conventional.alpha),
                    e.power.unwrap_or(conventional.power),
                    e.sidedness.unwrap_or_default(),
                )?;
                let delta = match e.delta {
                    DeltaSpec::Value(d) => d,
                    DeltaSpec::AtMde { at_mde } => {
                        mde_bound(&MdeInputs::new(e.m, e.rho_d, config)?, at_mde)?
                    }
                };
                let spec = SimulationSpec {
                    m: e.m,
                    rho_d: e.rho_d,
                    delta,
                    config,
                    trials: e.trials,
                    seed,
                    test_variant: e.test_variant,
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }
}

// SplitMix64 finaliser over seed + index.
fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: SimulationSpec,
    pub estimate: PowerEstimate,
}

/// Deterministic sweep output; contains no timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tool_version: String,
    pub rng: String,
    pub rows: Vec<SweepRow>,
}

/// Wall-clock milliseconds per sweep row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTiming {
    pub runtime_ms: Vec<f64>,
}

pub fn run_sweep(
    config: &SweepConfig,
    seed_override: Option<u64>,
    workers: usize,
) -> Result<(SweepReport, SweepTiming)> {
    let specs = config.resolve(seed_override)?;
    let mut rows = Vec::with_capacity(specs.len());
    let mut timing = SweepTiming::default();
    for spec in specs {
        let start = Instant::now();
        let estimate = simulate_power_with(&spec, workers)?;
        timing.runtime_ms.push(start.elapsed().as_secs_f64() * 1e3);
        log::info!(
            "m={} rho={} delta={:.6} {}: rate={:.5}",
            spec.m,
            spec.rho_d,
            spec.delta,
            spec.test_variant.as_str(),
            estimate.rejection_rate
        );
        rows.push(SweepRow { spec, estimate });
    }
    let report = SweepReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_DESCRIPTION.to_string(),
        rows,
    };
    Ok((report, timing))
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep report serialises")
    }

    /// Comma-separated table; `runtime_ms` is empty when no timing is given.
    pub fn to_csv(&self, timing: Option<&SweepTiming>) -> String {
        let mut out = String::from(
            "m,rho_d,delta,alpha,power,sidedness,trials,seed,test_variant,rejections,rejection_rate,mc_standard_error,runtime_ms\n",
        );
        for (i, row) in self.rows.iter().enumerate() {
            let s = &row.spec;
            let runtime = timing
                .and_then(|t| t.runtime_ms.get(i))
                .map(|ms| format!("{ms:.1}"))
                .unwrap_or_default();
            let sidedness = match s.config.sidedness {
                Sidedness::One => "one",
                Sidedness::Two => "two",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.m,
                s.rho_d,
                s.delta,
                s.config.alpha,
                s.config.power,
                sidedness,
                s.trials,
                s.seed,
                s.test_variant.as_str(),
                row.estimate.rejections,
                row.estimate.rejection_rate,
                row.estimate.mc_standard_error,
                runtime
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "seed": 11,
        "entries": [
            {"m": 100, "rho_d": 0.1, "delta": 0.0, "trials": 200, "test_variant": "z-null-variance"},
            {"m": 100, "rho_d": 0.1, "delta": {"at_mde": "paper-compat"}, "trials": 200,
             "test_variant": "mcnemar-exact", "seed": 5}
        ]
    }"#;

    #[test]
    fn resolves_seeds_and_deltas() {
        let cfg = SweepConfig::parse(CONFIG, false).unwrap();
        let specs = cfg.resolve(None).unwrap();
        assert_eq!(specs[0].seed, derive_seed(11, 0));
        assert_eq!(specs[1].seed, 5);
        assert!((specs[1].delta - 2.8 * (0.1f64 / 100.0).sqrt()).abs() < 1e-15);
        let over = cfg.resolve(Some(12)).unwrap();
        assert_ne!(over[0].seed, specs[0].seed);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let mut cfg = SweepConfig::parse(CONFIG, false).unwrap();
        cfg.seed = None;
        assert!(matches!(cfg.resolve(None), Err(Error::Validation(_))));
    }

    #[test]
    fn toml_config() {
        let text = r#"
seed = 3
[[entries]]
m = 50
rho_d = 0.2
delta = 0.05
trials = 10
test_variant = "z-estimated-variance"
"#;
        let cfg = SweepConfig::parse(text, true).unwrap();
        assert_eq!(cfg.entries.len(), 1);
        assert_eq!(cfg.entries[0].delta, DeltaSpec::Value(0.05));
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = SweepConfig::parse(CONFIG, false).unwrap();
        let (a, ta) = run_sweep(&cfg, None, 1).unwrap();
        let (b, _) = run_sweep(&cfg, None, 2).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let csv = a.to_csv(Some(&ta));
        assert_eq!(csv.lines().count(), 3);
    }
}
