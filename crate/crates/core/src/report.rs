//! Audit reports: assembly from a record set and rendering.
//!
//! Renderers only format numbers already stored in the report. The single
//! transformation they apply is proportion to percentage-point scaling.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    discordant_counts, mde_verdict, qri, residual_analysis, summarize_cell, summarize_prompts,
    CellSummary, MdeVerdict, PairedCounts, PairingMode, PromptSummary, QriReport, Ratio, RecordSet,
    ResidualAnalysis, ResidualRow,
};
use crate::error::{Error, Result};
use crate::prereg::{revise, PreRegistration, RevisionOutcome};
use crate::stats::{mcnemar_test, McNemarResult, McNemarVariant, SignificanceConfig};

pub const REPORT_SCHEMA: &str = "audit-report/1";
pub const NO_CELLS_BANNER: &str = "NO CELLS: the input contained no (model, benchmark) cells.";
pub const DEFAULT_BANDS: [f64; 2] = [0.015, 0.020];
pub const DEFAULT_VERDICT_RHOS: [f64; 2] = [0.10, 0.05];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of_bytes(path: impl Into<String>, bytes: &[u8]) -> Self {
        InputHash {
            path: path.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub pairing: PairingMode,
    pub config: SignificanceConfig,
    pub verdict_rhos: Vec<f64>,
    pub bands: Vec<f64>,
    pub mcnemar_variant: McNemarVariant,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            pairing: PairingMode::Strict,
            config: SignificanceConfig::conventional(),
            verdict_rhos: DEFAULT_VERDICT_RHOS.to_vec(),
            bands: DEFAULT_BANDS.to_vec(),
            mcnemar_variant: McNemarVariant::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub schema: String,
    pub tool_version: String,
    pub inputs: Vec<InputHash>,
    pub conditions: Vec<String>,
    pub records: usize,
    pub duplicates_dropped: u64,
    /// Only set by commands that consume randomness.
    pub seed: Option<u64>,
    pub options: AuditOptions,
}

/// Paired statistics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub paired: PairedCounts,
    pub rho_hat: f64,
    pub delta_hat: f64,
    pub mcnemar: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub summary: CellSummary,
    pub qri: QriReport,
    pub verdict: MdeVerdict,
    pub prompt: Option<PromptSummary>,
    /// `None` when pairing is insufficient under the chosen mode.
    pub paired: Option<PairedStats>,
    pub revision: Option<RevisionOutcome>,
}

/// Reference to the pre-registration an audit was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreregRef {
    pub content_hash: String,
    pub document: PreRegistration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: ReportMetadata,
    pub prereg: Option<PreregRef>,
    pub cells: Vec<CellReport>,
    pub residuals: ResidualAnalysis,
    /// More than one cell violated its disagreement-rate prior; alpha is not corrected.
    pub multiplicity_flag: bool,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn from_json(text: &str) -> Result<Self> {
        let report: AuditReport = serde_json::from_str(text)
            .map_err(|e| Error::parse(e.line(), format!("audit report: {e}")))?;
        if report.metadata.schema != REPORT_SCHEMA {
            return Err(Error::parse(
                1,
                format!("unsupported report schema {:?}", report.metadata.schema),
            ));
        }
        Ok(report)
    }
}

pub fn build_audit(
    records: &RecordSet,
    prereg: Option<&PreRegistration>,
    options: &AuditOptions,
    inputs: Vec<InputHash>,
) -> Result<AuditReport> {
    let mut warnings: Vec<String> = records.warnings().to_vec();
    let mut cells = Vec::new();
    for cell in records.cells() {
        let summary = summarize_cell(records, &cell)?;
        let prompt = summarize_prompts(records, &cell)?;
        let qri = qri(&summary, prompt.as_ref());
        let verdict = mde_verdict(
            summary.delta,
            summary.m_aggregate,
            &options.verdict_rhos,
            &options.config,
        )?;
        let paired = match discordant_counts(records, &cell, options.pairing) {
            Ok(p) => Some(p),
            Err(e @ Error::Validation(_))
                if matches!(options.pairing, PairingMode::Lenient { .. }) =>
            {
                warnings.push(format!("{e}; paired statistics unavailable"));
                None
            }
            Err(e) => return Err(e),
        };
        let paired = paired.map(|p| {
            warnings.extend(p.warnings.iter().cloned());
            PairedStats {
                rho_hat: p.counts.rho_hat(),
                delta_hat: p.counts.delta_hat(),
                mcnemar: mcnemar_test(&p.counts, options.mcnemar_variant),
                paired: p,
            }
        });
        let revision = match (prereg, &paired) {
            (Some(doc), Some(p)) => {
                let outcome = revise(doc, &p.paired.counts)?;
                warnings.extend(outcome.warnings.iter().map(|w| format!("cell {cell}: {w}")));
                Some(outcome)
            }
            _ => None,
        };
        cells.push(CellReport {
            summary,
            qri,
            verdict,
            prompt,
            paired,
            revision,
        });
    }
    let rows: Vec<ResidualRow> = cells
        .iter()
        .flat_map(|c| c.summary.residual_rows())
        .collect();
    let residuals = residual_analysis(&rows, &options.bands);
    let violated = cells
        .iter()
        .filter(|c| c.revision.as_ref().is_some_and(|r| r.prior_violated))
        .count();
    if violated > 1 {
        warnings.push(format!(
            "{violated} cells violated the disagreement-rate prior; no multiplicity correction applied"
        ));
    }
    Ok(AuditReport {
        metadata: ReportMetadata {
            schema: REPORT_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            conditions: records.conditions().to_vec(),
            records: records.len(),
            duplicates_dropped: records.duplicates_dropped(),
            seed: None,
            options: options.clone(),
        },
        prereg: prereg.map(|d| PreregRef {
            content_hash: d.content_hash(),
            document: d.clone(),
        }),
        cells,
        residuals,
        multiplicity_flag: violated > 1,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Markdown,
    Machine,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "machine" | "json" => Ok(ReportFormat::Machine),
            other => Err(Error::validation(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

pub fn render_report(report: &AuditReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => {
            let mut s = serde_json::to_string_pretty(report).expect("report serialises");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Text => render_text(report),
    }
}

/// Percentage points at one decimal; never prints "-0.0".
pub fn pp(x: f64) -> String {
    let s = format!("{:.1}", x * 100.0);
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

fn pp_opt(x: Option<f64>) -> String {
    x.map(pp).unwrap_or_else(|| "n/a".into())
}

fn ratio(r: &Ratio) -> String {
    match r {
        Ratio::Defined { value } => format!("{value:.2}"),
        Ratio::Undefined { .. } => "undefined".into(),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn labels(report: &AuditReport) -> (String, String) {
    let c = &report.metadata.conditions;
    (
        c.first().cloned().unwrap_or_else(|| "A".into()),
        c.get(1).cloned().unwrap_or_else(|| "B".into()),
    )
}

fn render_markdown(report: &AuditReport) -> String {
    let mut out = String::new();
    let md = &report.metadata;
    let (la, lb) = labels(report);
    let _ = writeln!(out, "# Paired precision audit\n");
    let _ = writeln!(out, "- tool version: {}", md.tool_version);
    let _ = writeln!(out, "- conditions: A = {la}, B = {lb}; delta = B - A");
    let _ = writeln!(
        out,
        "- records: {} ({} exact duplicates dropped)",
        md.records, md.duplicates_dropped
    );
    for input in &md.inputs {
        let _ = writeln!(out, "- input `{}` sha256 `{}`", input.path, input.sha256);
    }
    if let Some(p) = &report.prereg {
        let _ = writeln!(
            out,
            "- pre-registration {} (m = {}, rho_prior = {}, MDE = {} pp)",
            p.content_hash,
            p.document.m,
            p.document.rho_prior,
            pp(p.document.computed_mde)
        );
    }
    out.push('\n');
    if report.cells.is_empty() {
        let _ = writeln!(out, "**{NO_CELLS_BANNER}**\n");
    }

    let _ = writeln!(out, "## Cross-split SD against the binomial reference\n");
    let _ = writeln!(
        out,
        "| Model | Benchmark | Precision | p̂ (%) | σ̂_split (pp) | σ_bin (pp) | r (pp) |"
    );
    let _ = writeln!(out, "|---|---|---|---:|---:|---:|---:|");
    for r in &report.residuals.sorted {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.model,
            r.benchmark,
            r.precision,
            pp(r.p_hat),
            pp(r.sd_split),
            pp(r.sd_bin),
            pp(r.residual)
        );
    }
    out.push('\n');
    for b in &report.residuals.bands {
        let _ = writeln!(
            out,
            "- \\|r\\| ≤ {} pp: {} of {}",
            pp(b.band),
            b.within,
            b.total
        );
    }
    out.push('\n');

    let _ = writeln!(out, "## Quantization Reliability Index\n");
    let _ = writeln!(
        out,
        "| Model | Benchmark | Δ̂ (pp) | σ̂_split (pp) | QRI_split | σ̂_prompt (pp) | QRI_combined |"
    );
    let _ = writeln!(out, "|---|---|---:|---:|---:|---:|---:|");
    for c in &report.cells {
        let s = &c.summary;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            s.model,
            s.benchmark,
            pp(s.delta),
            pp_opt(s.sd_split_pooled),
            ratio(&c.qri.qri_split),
            pp_opt(c.prompt.as_ref().map(|p| p.sd_prompt_pooled)),
            ratio(&c.qri.qri_combined)
        );
    }
    out.push('\n');

    let rhos = &md.options.verdict_rhos;
    let _ = writeln!(out, "## MDE comparison\n");
    let mut header = String::from("| Model | Benchmark | m | \\|Δ̂\\| (pp) |");
    let mut rule = String::from("|---|---|---:|---:|");
    for rho in rhos {
        let _ = write!(header, " δ* ρ_d={rho} (pp) | > δ* ρ_d={rho} |");
        rule.push_str("---:|:---:|");
    }
    let _ = writeln!(out, "{header}\n{rule}");
    for c in &report.cells {
        let v = &c.verdict;
        let mut row = format!(
            "| {} | {} | {} | {} |",
            c.summary.model,
            c.summary.benchmark,
            v.m,
            pp(v.delta_abs)
        );
        for e in &v.entries {
            let _ = write!(row, " {} | {} |", pp(e.mde), yes_no(e.exceeds));
        }
        let _ = writeln!(out, "{row}");
    }
    let _ = writeln!(out, "\n_{}._\n", crate::audit::VERDICT_CAVEAT);

    if report.cells.iter().any(|c| c.paired.is_some()) {
        let _ = writeln!(out, "## Paired counts\n");
        let _ = writeln!(out, "| Model | Benchmark | n11 | n10 | n01 | n00 | ρ̂_d | McNemar p | U95 | prior violated | revised δ* (pp) |");
        let _ = writeln!(
            out,
            "|---|---|---:|---:|---:|---:|---:|---:|---:|:---:|---:|"
        );
        for c in &report.cells {
            let Some(p) = &c.paired else { continue };
            let k = &p.paired.counts;
            let (u95, violated, revised) = match &c.revision {
                Some(r) => (
                    format!("{:.4}", r.u95),
                    yes_no(r.prior_violated).to_string(),
                    pp(r.revised_mde),
                ),
                None => ("n/a".into(), "n/a".into(), "n/a".into()),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {:.4} | {:.4} | {} | {} | {} |",
                c.summary.model,
                c.summary.benchmark,
                k.n11,
                k.n10,
                k.n01,
                k.n00,
                p.rho_hat,
                p.mcnemar.p_value,
                u95,
                violated,
                revised
            );
        }
        out.push('\n');
    }

    if report.multiplicity_flag {
        let _ = writeln!(out, "**Multiple cells violated the disagreement-rate prior; alpha is not corrected for multiplicity.**\n");
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out, "## Warnings\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
        out.push('\n');
    }
    out
}

fn render_text(report: &AuditReport) -> String {
    let mut out = String::new();
    let md = &report.metadata;
    let (la, lb) = labels(report);
    let _ = writeln!(out, "pairmde audit (version {})", md.tool_version);
    let _ = writeln!(out, "conditions: A={la} B={lb} (delta = B - A)");
    let _ = writeln!(
        out,
        "records: {}, duplicates dropped: {}",
        md.records, md.duplicates_dropped
    );
    for input in &md.inputs {
        let _ = writeln!(out, "input {} sha256={}", input.path, input.sha256);
    }
    if let Some(p) = &report.prereg {
        let _ = writeln!(
            out,
            "prereg {} m={} rho_prior={} mde={} pp",
            p.content_hash,
            p.document.m,
            p.document.rho_prior,
            pp(p.document.computed_mde)
        );
    }
    if report.cells.is_empty() {
        let _ = writeln!(out, "\n{NO_CELLS_BANNER}");
    }
    for c in &report.cells {
        let s = &c.summary;
        let _ = writeln!(out, "\n[{}/{}]", s.model, s.benchmark);
        let _ = writeln!(
            out,
            "  accuracy  {la}={}% sd={} pp | {lb}={}% sd={} pp",
            pp(s.a.mean),
            pp_opt(s.a.sd_split),
            pp(s.b.mean),
            pp_opt(s.b.sd_split)
        );
        let _ = writeln!(out, "  delta     {} pp (m={})", pp(s.delta), s.m_aggregate);
        let _ = writeln!(
            out,
            "  qri       split={} combined={}",
            ratio(&c.qri.qri_split),
            ratio(&c.qri.qri_combined)
        );
        for e in &c.verdict.entries {
            let _ = writeln!(
                out,
                "  verdict   rho_d={}: mde={} pp, exceeds={}",
                e.rho_d,
                pp(e.mde),
                yes_no(e.exceeds)
            );
        }
        if let Some(p) = &c.paired {
            let k = &p.paired.counts;
            let _ = writeln!(
                out,
                "  paired    n11={} n10={} n01={} n00={} rho_hat={:.4} mcnemar_p={:.4}",
                k.n11, k.n10, k.n01, k.n00, p.rho_hat, p.mcnemar.p_value
            );
        }
        if let Some(r) = &c.revision {
            let _ = writeln!(
                out,
                "  revision  u95={:.4} violated={} rho_eff={:.4} mde={} pp borderline={}",
                r.u95,
                yes_no(r.prior_violated),
                r.rho_eff,
                pp(r.revised_mde),
                yes_no(r.borderline_flag)
            );
        }
    }
    if !report.residuals.bands.is_empty() {
        out.push('\n');
        for b in &report.residuals.bands {
            let _ = writeln!(out, "|r| <= {} pp: {} of {}", pp(b.band), b.within, b.total);
        }
    }
    let _ = writeln!(out, "\nnote: {}", crate::audit::VERDICT_CAVEAT);
    if report.multiplicity_flag {
        let _ = writeln!(
            out,
            "note: multiple cells violated the prior; no multiplicity correction applied"
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
