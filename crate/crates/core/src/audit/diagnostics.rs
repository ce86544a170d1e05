use serde::{Deserialize, Serialize};

use super::summary::{CellSummary, PromptSummary, ResidualRow};
use crate::error::Result;
use crate::stats::{mde_bound, MdeInputs, MdeMode, SignificanceConfig};

/// A ratio that may be undefined; undefined values carry a reason and are never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum Ratio {
    Defined { value: f64 },
    Undefined { reason: String },
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Defined { value } => Some(*value),
            Ratio::Undefined { .. } => None,
        }
    }

    fn undefined(reason: impl Into<String>) -> Self {
        Ratio::Undefined {
            reason: reason.into(),
        }
    }
}

/// Quantization Reliability Index of a cell: `|Δ̂|` over pooled noise SDs.
///
/// Descriptive signal-to-noise only; not a test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QriReport {
    pub qri_split: Ratio,
    pub qri_combined: Ratio,
}

/// QRI from its parts: `|Δ̂|`, pooled split SD, and (optionally) pooled prompt SD.
pub fn qri_from_parts(delta_abs: f64, sd_split: Option<f64>, sd_prompt: Option<f64>) -> QriReport {
    let delta_abs = delta_abs.abs();
    let qri_split = match sd_split {
        None => Ratio::undefined("pooled split SD unavailable"),
        Some(s) if s <= 0.0 => Ratio::undefined("pooled split SD is zero"),
        Some(s) => Ratio::Defined {
            value: delta_abs / s,
        },
    };
    let qri_combined = match (sd_split, sd_prompt) {
        (_, None) => Ratio::undefined("no prompt-template data for this cell"),
        (None, Some(_)) => Ratio::undefined("pooled split SD unavailable"),
        (Some(s), Some(p)) => {
            let denom = (s * s + p * p).sqrt();
            if denom <= 0.0 {
                Ratio::undefined("combined noise SD is zero")
            } else {
                Ratio::Defined {
                    value: delta_abs / denom,
                }
            }
        }
    };
    QriReport {
        qri_split,
        qri_combined,
    }
}

pub fn qri(cell: &CellSummary, prompt: Option<&PromptSummary>) -> QriReport {
    qri_from_parts(
        cell.delta,
        cell.sd_split_pooled,
        prompt.map(|p| p.sd_prompt_pooled),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCount {
    pub band: f64,
    pub within: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualAnalysis {
    pub bands: Vec<BandCount>,
    /// Rows sorted by residual, largest first.
    pub sorted: Vec<ResidualRow>,
}

// Absorbs binary representation error of decimal-transcribed residuals so
// that a residual printed as exactly the band edge counts as inside.
const BAND_EPS: f64 = 1e-12;

/// Count precision-cells with `|r| <= band` for each band.
pub fn residual_analysis(rows: &[ResidualRow], bands: &[f64]) -> ResidualAnalysis {
    let bands = bands
        .iter()
        .map(|&band| BandCount {
            band,
            within: rows
                .iter()
                .filter(|r| r.residual.abs() <= band + BAND_EPS)
                .count(),
            total: rows.len(),
        })
        .collect();
    let mut sorted = rows.to_vec();
    sorted.sort_by(|x, y| {
        y.residual.total_cmp(&x.residual).then_with(|| {
            (&x.model, &x.benchmark, &x.precision).cmp(&(&y.model, &y.benchmark, &y.precision))
        })
    });
    ResidualAnalysis { bands, sorted }
}

pub const VERDICT_CAVEAT: &str =
    "design-scale comparison of |delta| against the planned MDE, not a significance test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub rho_d: f64,
    pub mde: f64,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdeVerdict {
    pub delta_abs: f64,
    pub m: u64,
    pub entries: Vec<VerdictEntry>,
    pub caveat: String,
}

/// Compare `|Δ̂|` with the paper-compatible MDE at each disagreement rate.
pub fn mde_verdict(
    delta_abs: f64,
    m: u64,
    rho_values: &[f64],
    config: &SignificanceConfig,
) -> Result<MdeVerdict> {
    let delta_abs = delta_abs.abs();
    let entries = rho_values
        .iter()
        .map(|&rho_d| {
            let mde = mde_bound(&MdeInputs::new(m, rho_d, *config)?, MdeMode::PaperCompat)?;
            Ok(VerdictEntry {
                rho_d,
                mde,
                exceeds: delta_abs > mde,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MdeVerdict {
        delta_abs,
        m,
        entries,
        caveat: VERDICT_CAVEAT.to_string(),
    })
}
