use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ingest::{CellKey, ItemOutcomes, RecordSet};
use crate::error::{Error, Result};
use crate::stats::{binomial_reference_sd, DiscordantCounts};

/// Sample standard deviation (denominator `count - 1`).
pub fn cross_split_sd(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::domain(format!(
            "standard deviation undefined for {} value(s); need at least 2",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Root-mean-square pool of two SDs, `sqrt((a² + b²) / 2)`.
pub fn rms_pool(sd_a: f64, sd_b: f64) -> f64 {
    debug_assert!(sd_a >= 0.0 && sd_b >= 0.0);
    ((sd_a * sd_a + sd_b * sd_b) / 2.0).sqrt()
}

/// Split-level diagnostics for one condition of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub precision: String,
    /// Split indices in ascending order, parallel to `split_means`.
    pub splits: Vec<u32>,
    pub split_means: Vec<f64>,
    pub split_sizes: Vec<u64>,
    /// Accuracy over the union of splits.
    pub mean: f64,
    pub n_items: u64,
    /// Items per split used for the binomial reference.
    pub n_per_split: u64,
    pub sd_split: Option<f64>,
    pub sd_bin: f64,
    /// `sd_split - sd_bin`.
    pub residual: Option<f64>,
}

impl PrecisionSummary {
    fn from_outcomes(precision: &str, outcomes: &ItemOutcomes) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::validation(format!(
                "no records for condition {precision:?}"
            )));
        }
        let mut by_split: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        for (&(split, _), &correct) in outcomes {
            let e = by_split.entry(split).or_insert((0, 0));
            e.0 += u64::from(correct);
            e.1 += 1;
        }
        let splits: Vec<u32> = by_split.keys().copied().collect();
        let split_sizes: Vec<u64> = by_split.values().map(|&(_, n)| n).collect();
        let split_means: Vec<f64> = by_split
            .values()
            .map(|&(c, n)| c as f64 / n as f64)
            .collect();
        let correct: u64 = by_split.values().map(|&(c, _)| c).sum();
        let n_items = outcomes.len() as u64;
        let mean = correct as f64 / n_items as f64;
        let n_per_split = ((n_items as f64 / splits.len() as f64).round() as u64).max(1);
        let sd_split = cross_split_sd(&split_means).ok();
        Self::assemble(
            precision,
            splits,
            split_means,
            split_sizes,
            mean,
            n_items,
            n_per_split,
            sd_split,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        precision: &str,
        splits: Vec<u32>,
        split_means: Vec<f64>,
        split_sizes: Vec<u64>,
        mean: f64,
        n_items: u64,
        n_per_split: u64,
        sd_split: Option<f64>,
    ) -> Result<Self> {
        let sd_bin = binomial_reference_sd(mean, n_per_split)?;
        Ok(PrecisionSummary {
            precision: precision.to_string(),
            splits,
            split_means,
            split_sizes,
            mean,
            n_items,
            n_per_split,
            sd_split,
            sd_bin,
            residual: sd_split.map(|s| s - sd_bin),
        })
    }

    /// Summary-level construction from a published mean and split SD.
    pub fn from_summary(precision: &str, mean: f64, sd_split: f64, k: u64, n: u64) -> Result<Self> {
        Self::assemble(
            precision,
            Vec::new(),
            Vec::new(),
            Vec::new(),
            mean,
            k * n,
            n,
            Some(sd_split),
        )
    }

    pub fn is_balanced(&self) -> bool {
        self.split_sizes.windows(2).all(|w| w[0] == w[1])
    }
}

/// Per-cell split diagnostics for both conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub benchmark: String,
    /// Condition A (reference).
    pub a: PrecisionSummary,
    /// Condition B (treatment).
    pub b: PrecisionSummary,
    /// RMS pool of the two split SDs.
    pub sd_split_pooled: Option<f64>,
    /// `mean(B) - mean(A)` over the union of splits.
    pub delta: f64,
    /// Items present under both conditions.
    pub m_aggregate: u64,
    pub pairing_coverage: Option<f64>,
}

impl CellSummary {
    pub fn cell(&self) -> CellKey {
        CellKey::new(&self.model, &self.benchmark)
    }

    /// Build from summary-level numbers (mean and split SD per condition).
    pub fn from_summary(cell: &CellKey, a: PrecisionSummary, b: PrecisionSummary) -> Self {
        let sd_split_pooled = match (a.sd_split, b.sd_split) {
            (Some(x), Some(y)) => Some(rms_pool(x, y)),
            _ => None,
        };
        let m_aggregate = a.n_items.min(b.n_items);
        CellSummary {
            model: cell.model.clone(),
            benchmark: cell.benchmark.clone(),
            delta: b.mean - a.mean,
            a,
            b,
            sd_split_pooled,
            m_aggregate,
            pairing_coverage: None,
        }
    }

    /// One residual row per condition.
    pub fn residual_rows(&self) -> Vec<ResidualRow> {
        [&self.a, &self.b]
            .into_iter()
            .filter_map(|p| {
                Some(ResidualRow {
                    model: self.model.clone(),
                    benchmark: self.benchmark.clone(),
                    precision: p.precision.clone(),
                    p_hat: p.mean,
                    sd_split: p.sd_split?,
                    sd_bin: p.sd_bin,
                    residual: p.residual?,
                })
            })
            .collect()
    }
}

/// One precision-cell of the binomial-reference decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub model: String,
    pub benchmark: String,
    pub precision: String,
    pub p_hat: f64,
    pub sd_split: f64,
    pub sd_bin: f64,
    pub residual: f64,
}

fn pair_labels(records: &RecordSet, cell: &CellKey) -> Result<(String, String)> {
    records
        .condition_pair()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| {
            Error::validation(format!(
                "cell {cell}: both conditions are required, found {:?}",
                records.conditions()
            ))
        })
}

fn nonempty(records: &RecordSet, cell: &CellKey, precision: &str) -> Result<ItemOutcomes> {
    let o = records.split_outcomes(cell, precision);
    if o.is_empty() {
        return Err(Error::validation(format!(
            "cell {cell}: no records for condition {precision:?}"
        )));
    }
    Ok(o)
}

/// Split diagnostics for one cell of a record set.
pub fn summarize_cell(records: &RecordSet, cell: &CellKey) -> Result<CellSummary> {
    let (a_label, b_label) = pair_labels(records, cell)?;
    let oa = nonempty(records, cell, &a_label)?;
    let ob = nonempty(records, cell, &b_label)?;
    let a = PrecisionSummary::from_outcomes(&a_label, &oa)?;
    let b = PrecisionSummary::from_outcomes(&b_label, &ob)?;
    let paired = oa.keys().filter(|k| ob.contains_key(*k)).count() as u64;
    let union = oa.len() as u64 + ob.len() as u64 - paired;
    let mut summary = CellSummary::from_summary(cell, a, b);
    summary.m_aggregate = paired;
    summary.pairing_coverage = Some(paired as f64 / union as f64);
    Ok(summary)
}

/// `mean(B) - mean(A)` over the union of all splits of a cell.
pub fn quant_delta(records: &RecordSet, cell: &CellKey) -> Result<f64> {
    let (a_label, b_label) = pair_labels(records, cell)?;
    let mean = |o: &ItemOutcomes| o.values().filter(|&&c| c).count() as f64 / o.len() as f64;
    let oa = nonempty(records, cell, &a_label)?;
    let ob = nonempty(records, cell, &b_label)?;
    Ok(mean(&ob) - mean(&oa))
}

/// How to treat items observed under only one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PairingMode {
    /// Every item must be present under both conditions.
    #[default]
    Strict,
    /// Drop unpaired items when coverage is at least `min_coverage`.
    Lenient { min_coverage: f64 },
}

/// Paired counts for a cell plus what was dropped to obtain them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCounts {
    pub counts: DiscordantCounts,
    pub coverage: f64,
    pub unpaired_dropped: u64,
    pub warnings: Vec<String>,
}

/// Paired 2x2 counts over split-study items present under both conditions.
///
/// `n10` counts items correct under A only.
pub fn discordant_counts(
    records: &RecordSet,
    cell: &CellKey,
    mode: PairingMode,
) -> Result<PairedCounts> {
    let (a_label, b_label) = pair_labels(records, cell)?;
    let oa = records.split_outcomes(cell, &a_label);
    let ob = records.split_outcomes(cell, &b_label);
    let (mut n11, mut n10, mut n01, mut n00) = (0u64, 0u64, 0u64, 0u64);
    for (key, &xa) in &oa {
        if let Some(&xb) = ob.get(key) {
            match (xa, xb) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    let paired = n11 + n10 + n01 + n00;
    if paired == 0 {
        return Err(Error::validation(format!("cell {cell}: no paired items")));
    }
    let union = oa.len() as u64 + ob.len() as u64 - paired;
    let coverage = paired as f64 / union as f64;
    let dropped = union - paired;
    let mut warnings = Vec::new();
    match mode {
        PairingMode::Strict if dropped > 0 => {
            return Err(Error::validation(format!(
                "cell {cell}: pairing coverage {paired}/{union} below 1 in strict mode"
            )));
        }
        PairingMode::Lenient { min_coverage } if coverage < min_coverage => {
            return Err(Error::validation(format!(
                "cell {cell}: pairing coverage {coverage:.4} below threshold {min_coverage}"
            )));
        }
        PairingMode::Lenient { .. } if dropped > 0 => {
            warnings.push(format!(
                "cell {cell}: dropped {dropped} unpaired item(s) (coverage {paired}/{union})"
            ));
        }
        _ => {}
    }
    let counts = DiscordantCounts::new(n11, n10, n01, n00)?;
    debug_assert!(counts.rho_hat() + 1e-12 >= counts.delta_hat().abs());
    Ok(PairedCounts {
        counts,
        coverage,
        unpaired_dropped: dropped,
        warnings,
    })
}

/// Template sweep diagnostics for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpread {
    pub precision: String,
    pub template_means: BTreeMap<String, f64>,
    pub sd: f64,
    pub range: f64,
}

impl TemplateSpread {
    pub fn from_means(precision: &str, template_means: BTreeMap<String, f64>) -> Result<Self> {
        let values: Vec<f64> = template_means.values().copied().collect();
        let sd = cross_split_sd(&values)?;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(TemplateSpread {
            precision: precision.to_string(),
            template_means,
            sd,
            range: max - min,
        })
    }
}

/// Prompt-template spread of a cell; defined only with at least two templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSummary {
    pub model: String,
    pub benchmark: String,
    pub a: TemplateSpread,
    pub b: TemplateSpread,
    /// RMS pool of the two per-condition template SDs.
    pub sd_prompt_pooled: f64,
}

impl PromptSummary {
    pub fn from_spreads(cell: &CellKey, a: TemplateSpread, b: TemplateSpread) -> Self {
        let sd_prompt_pooled = rms_pool(a.sd, b.sd);
        PromptSummary {
            model: cell.model.clone(),
            benchmark: cell.benchmark.clone(),
            a,
            b,
            sd_prompt_pooled,
        }
    }
}

/// Template sweep summary, or `None` when the cell has fewer than two
/// templates under either condition.
pub fn summarize_prompts(records: &RecordSet, cell: &CellKey) -> Result<Option<PromptSummary>> {
    let Some((a_label, b_label)) = records.condition_pair() else {
        return Ok(None);
    };
    let templates = records.templates(cell);
    if templates.len() < 2 {
        return Ok(None);
    }
    let spread = |label: &str| -> Result<Option<TemplateSpread>> {
        let mut means = BTreeMap::new();
        for t in &templates {
            let o = records.outcomes(cell, label, Some(t));
            if !o.is_empty() {
                let c = o.values().filter(|&&c| c).count();
                means.insert(t.clone(), c as f64 / o.len() as f64);
            }
        }
        if means.len() < 2 {
            return Ok(None);
        }
        TemplateSpread::from_means(label, means).map(Some)
    };
    match (spread(a_label)?, spread(b_label)?) {
        (Some(a), Some(b)) => Ok(Some(PromptSummary::from_spreads(cell, a, b))),
        _ => Ok(None),
    }
}
