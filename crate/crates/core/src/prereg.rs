//! Pre-registration documents and the disagreement-rate revision rule.
//!
//! A document commits the estimand, test design, disagreement-rate prior and
//! the resulting MDE before any benchmark numbers exist. The canonical text
//! form (`prereg/1`) is one `key: value` line per field, values written as
//! JSON scalars, keys sorted after the leading schema line. A SHA-256 content
//! hash covers every line except `created_at` and `content_hash`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{
    mde_bound, wilson_upper, DiscordantCounts, MdeInputs, MdeMode, Sidedness, SignificanceConfig,
};

pub const PREREG_SCHEMA: &str = "prereg/1";

/// One-sided confidence of the disagreement-rate upper bound.
pub const REVISION_CONFIDENCE: f64 = 0.95;

const MDE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimand {
    /// `m = n`: the effect on one split.
    SingleSplit,
    /// `m = k·n`: the effect on the union of `k` disjoint splits.
    Aggregate,
}

impl Estimand {
    fn as_str(&self) -> &'static str {
        match self {
            Estimand::SingleSplit => "single-split",
            Estimand::Aggregate => "aggregate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "single-split" => Some(Estimand::SingleSplit),
            "aggregate" => Some(Estimand::Aggregate),
            _ => None,
        }
    }
}

/// Fields a designer fills in; everything else is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct PreRegInputs {
    pub estimand: Estimand,
    pub k: Option<u64>,
    pub n: u64,
    pub config: SignificanceConfig,
    pub rho_prior: f64,
    pub rho_justification: String,
    pub paired_retention: bool,
    pub mde_mode: MdeMode,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreRegistration {
    pub estimand: Estimand,
    pub k: Option<u64>,
    pub n: u64,
    pub m: u64,
    pub config: SignificanceConfig,
    pub rho_prior: f64,
    pub rho_justification: String,
    pub mde_mode: MdeMode,
    /// MDE as a proportion.
    pub computed_mde: f64,
    pub paired_retention: bool,
    pub created_at: String,
}

fn derived_m(
    estimand: Estimand,
    k: Option<u64>,
    n: u64,
) -> Result<(Option<u64>, u64, Vec<String>)> {
    if n == 0 {
        return Err(Error::validation("items per split n must be at least 1"));
    }
    let mut warnings = Vec::new();
    match estimand {
        Estimand::Aggregate => {
            let k = k.ok_or_else(|| {
                Error::validation("aggregate estimand requires the split count k")
            })?;
            if k == 0 {
                return Err(Error::validation("split count k must be at least 1"));
            }
            let m = k
                .checked_mul(n)
                .ok_or_else(|| Error::validation("k * n overflows"))?;
            Ok((Some(k), m, warnings))
        }
        Estimand::SingleSplit => {
            if let Some(k) = k {
                warnings.push(format!("single-split estimand: k={k} ignored, m = n"));
            }
            Ok((None, n, warnings))
        }
    }
}

/// Build a document, computing `m` and the MDE. Returns warnings alongside.
pub fn create_prereg(inputs: PreRegInputs) -> Result<(PreRegistration, Vec<String>)> {
    let (k, m, warnings) = derived_m(inputs.estimand, inputs.k, inputs.n)?;
    if !(inputs.rho_prior > 0.0 && inputs.rho_prior <= 1.0) {
        return Err(Error::validation(format!(
            "rho_prior must lie in (0, 1], got {}",
            inputs.rho_prior
        )));
    }
    let mde_inputs = MdeInputs::new(m, inputs.rho_prior, inputs.config)?;
    let computed_mde = mde_bound(&mde_inputs, inputs.mde_mode)?;
    Ok((
        PreRegistration {
            estimand: inputs.estimand,
            k,
            n: inputs.n,
            m,
            config: inputs.config,
            rho_prior: inputs.rho_prior,
            rho_justification: inputs.rho_justification,
            mde_mode: inputs.mde_mode,
            computed_mde,
            paired_retention: inputs.paired_retention,
            created_at: inputs.created_at,
        },
        warnings,
    ))
}

impl PreRegistration {
    pub fn mde_inputs(&self) -> Result<MdeInputs> {
        MdeInputs::new(self.m, self.rho_prior, self.config)
    }

    fn hashed_fields(&self) -> BTreeMap<&'static str, Value> {
        let mut f = BTreeMap::new();
        f.insert("alpha", Value::from(self.config.alpha));
        f.insert("estimand", Value::from(self.estimand.as_str()));
        f.insert("k", self.k.map(Value::from).unwrap_or(Value::Null));
        f.insert("m", Value::from(self.m));
        f.insert("mde_mode", Value::from(mode_str(self.mde_mode)));
        f.insert(
            "mde_pp",
            Value::String(format!("{:.10}", self.computed_mde * 100.0)),
        );
        f.insert("n", Value::from(self.n));
        f.insert("paired_retention", Value::from(self.paired_retention));
        f.insert("power", Value::from(self.config.power));
        f.insert(
            "rho_justification",
            Value::from(self.rho_justification.clone()),
        );
        f.insert("rho_prior", Value::from(self.rho_prior));
        f.insert(
            "sidedness",
            Value::from(match self.config.sidedness {
                Sidedness::One => "one",
                Sidedness::Two => "two",
            }),
        );
        f
    }

    /// SHA-256 over the canonical lines, excluding `created_at`.
    pub fn content_hash(&self) -> String {
        content_hash_of(&self.hashed_fields())
    }

    /// Canonical `prereg/1` text.
    pub fn to_canonical(&self) -> String {
        let mut fields = self.hashed_fields();
        let hash = content_hash_of(&fields);
        fields.insert("content_hash", Value::from(hash));
        fields.insert("created_at", Value::from(self.created_at.clone()));
        let mut out = format!("schema: {}\n", Value::from(PREREG_SCHEMA));
        for (k, v) in &fields {
            out.push_str(&format!("{k}: {}\n", scalar(k, v)));
        }
        out
    }
}

fn mode_str(mode: MdeMode) -> &'static str {
    match mode {
        MdeMode::ExactQuantile => "exact-quantile",
        MdeMode::PaperCompat => "paper-compat",
    }
}

// mde_pp is a fixed-decimal number written bare.
fn scalar(key: &str, v: &Value) -> String {
    match (key, v) {
        ("mde_pp", Value::String(s)) => s.clone(),
        _ => v.to_string(),
    }
}

fn content_hash_of(fields: &BTreeMap<&'static str, Value>) -> String {
    let mut h = Sha256::new();
    h.update(format!("schema: {}\n", Value::from(PREREG_SCHEMA)));
    for (k, v) in fields {
        h.update(format!("{k}: {}\n", scalar(k, v)));
    }
    hex::encode(h.finalize())
}

pub fn serialize_prereg(doc: &PreRegistration) -> String {
    doc.to_canonical()
}

/// Parse canonical text, verifying the content hash and recomputing the MDE.
pub fn parse_prereg(text: &str) -> Result<PreRegistration> {
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, "expected `key: value`"))?;
        let key = key.trim().to_string();
        if map.contains_key(&key) {
            return Err(Error::parse(lineno, format!("duplicate key {key:?}")));
        }
        map.insert(key, (lineno, value.trim().to_string()));
    }

    let get = |key: &str| -> Result<(usize, Value)> {
        let (line, raw) = map
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("missing field {key:?}")))?;
        let v = serde_json::from_str(raw)
            .map_err(|e| Error::parse(*line, format!("bad value for {key:?}: {e}")))?;
        Ok((*line, v))
    };
    let string = |key: &str| -> Result<String> {
        let (line, v) = get(key)?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::parse(line, format!("{key:?} must be a string")))
    };
    let number = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        v.as_f64()
            .ok_or_else(|| Error::parse(line, format!("{key:?} must be a number")))
    };
    let count = |key: &str| -> Result<Option<u64>> {
        let (line, v) = get(key)?;
        if v.is_null() {
            return Ok(None);
        }
        v.as_u64()
            .map(Some)
            .ok_or_else(|| Error::parse(line, format!("{key:?} must be a non-negative integer")))
    };

    let schema = string("schema")?;
    if schema != PREREG_SCHEMA {
        return Err(Error::parse(
            map["schema"].0,
            format!("unsupported schema {schema:?}, expected {PREREG_SCHEMA:?}"),
        ));
    }
    let estimand_raw = string("estimand")?;
    let estimand = Estimand::parse(&estimand_raw).ok_or_else(|| {
        Error::parse(
            map["estimand"].0,
            format!("unknown estimand {estimand_raw:?}"),
        )
    })?;
    let sidedness = match string("sidedness")?.as_str() {
        "one" => Sidedness::One,
        "two" => Sidedness::Two,
        other => {
            return Err(Error::parse(
                map["sidedness"].0,
                format!("unknown sidedness {other:?}"),
            ))
        }
    };
    let mde_mode = match string("mde_mode")?.as_str() {
        "exact-quantile" => MdeMode::ExactQuantile,
        "paper-compat" => MdeMode::PaperCompat,
        other => {
            return Err(Error::parse(
                map["mde_mode"].0,
                format!("unknown mde_mode {other:?}"),
            ))
        }
    };
    let paired_retention = {
        let (line, v) = get("paired_retention")?;
        v.as_bool()
            .ok_or_else(|| Error::parse(line, "\"paired_retention\" must be a boolean"))?
    };
    let n = count("n")?.ok_or_else(|| Error::parse(map["n"].0, "n is required"))?;
    let stored_m = count("m")?.ok_or_else(|| Error::parse(map["m"].0, "m is required"))?;
    let stored_mde = number("mde_pp")? / 100.0;
    let stored_hash = string("content_hash")?;

    let inputs = PreRegInputs {
        estimand,
        k: count("k")?,
        n,
        config: SignificanceConfig::with_sidedness(number("alpha")?, number("power")?, sidedness)?,
        rho_prior: number("rho_prior")?,
        rho_justification: string("rho_justification")?,
        paired_retention,
        mde_mode,
        created_at: string("created_at")?,
    };
    let (doc, _) = create_prereg(inputs)?;

    if doc.m != stored_m {
        return Err(Error::Tamper(format!(
            "stored m={stored_m} is inconsistent with the {} estimand (m={})",
            estimand.as_str(),
            doc.m
        )));
    }
    if (doc.computed_mde - stored_mde).abs() > MDE_TOLERANCE {
        return Err(Error::Tamper(format!(
            "stored MDE {:.10} pp does not match recomputed {:.10} pp",
            stored_mde * 100.0,
            doc.computed_mde * 100.0
        )));
    }
    let actual_hash = doc.content_hash();
    if actual_hash != stored_hash {
        return Err(Error::Tamper(format!(
            "content hash mismatch: stored {stored_hash}, computed {actual_hash}"
        )));
    }
    Ok(doc)
}

/// Result of applying the disagreement-rate revision rule to observed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionOutcome {
    pub observed: DiscordantCounts,
    /// One-sided Wilson upper bound on the disagreement rate.
    pub u95: f64,
    pub prior_violated: bool,
    pub rho_eff: f64,
    pub revised_mde: f64,
    /// `|Δ̂|` from the observed counts.
    pub delta_abs: f64,
    /// Set when `|Δ̂|` crosses between the original and the revised MDE.
    pub borderline_flag: bool,
    pub prereg_m: u64,
    pub observed_m: u64,
    pub warnings: Vec<String>,
}

/// Apply the revision rule: `ρ_eff = max(ρ_prior, U95)`; the original MDE
/// stays binding unless `U95 > ρ_prior`.
pub fn revise(prereg: &PreRegistration, observed: &DiscordantCounts) -> Result<RevisionOutcome> {
    let observed_m = observed.m();
    if observed_m == 0 {
        return Err(Error::domain("observed counts cover no items"));
    }
    let mut warnings = Vec::new();
    if observed_m != prereg.m {
        warnings.push(format!(
            "observed m={observed_m} differs from pre-registered m={}; revision uses the observed m",
            prereg.m
        ));
    }
    let u95 = wilson_upper(observed.discordant(), observed_m, REVISION_CONFIDENCE)?;
    let prior_violated = u95 > prereg.rho_prior;
    let rho_eff = prereg.rho_prior.max(u95);
    let revised_mde = if prior_violated {
        mde_bound(
            &MdeInputs::new(observed_m, rho_eff, prereg.config)?,
            prereg.mde_mode,
        )?
    } else {
        prereg.computed_mde
    };
    let delta_abs = observed.delta_hat().abs();
    let borderline_flag = (delta_abs > prereg.computed_mde) != (delta_abs > revised_mde);
    Ok(RevisionOutcome {
        observed: *observed,
        u95,
        prior_violated,
        rho_eff,
        revised_mde,
        delta_abs,
        borderline_flag,
        prereg_m: prereg.m,
        observed_m,
        warnings,
    })
}

/// One cell's revision inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRevision {
    pub model: String,
    pub benchmark: String,
    pub outcome: RevisionOutcome,
}

/// Revision report embedding the committed document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionReport {
    pub prereg: PreRegistration,
    pub content_hash: String,
    pub revisions: Vec<CellRevision>,
    /// Set when more than one cell is revised in one run; no multiplicity
    /// correction is applied to alpha.
    pub multiplicity_flag: bool,
}

impl RevisionReport {
    pub fn new(prereg: PreRegistration, revisions: Vec<CellRevision>) -> Self {
        let violated = revisions
            .iter()
            .filter(|r| r.outcome.prior_violated)
            .count();
        RevisionReport {
            content_hash: prereg.content_hash(),
            prereg,
            multiplicity_flag: violated > 1,
            revisions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(estimand: Estimand, k: Option<u64>, rho: f64) -> PreRegInputs {
        PreRegInputs {
            estimand,
            k,
            n: 100,
            config: SignificanceConfig::conventional(),
            rho_prior: rho,
            rho_justification: "pilot sensitivity range".into(),
            paired_retention: true,
            mde_mode: MdeMode::ExactQuantile,
            created_at: "2026-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn aggregate_and_single_split() {
        let (doc, w) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        assert_eq!(doc.m, 500);
        assert!((doc.computed_mde - 0.0396).abs() < 1e-4);
        assert!(w.is_empty());
        let (doc, w) = create_prereg(inputs(Estimand::SingleSplit, Some(5), 0.10)).unwrap();
        assert_eq!(doc.m, 100);
        assert_eq!(doc.k, None);
        assert!((doc.computed_mde - 0.0885).abs() < 2e-4);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn validation_errors() {
        assert!(create_prereg(inputs(Estimand::Aggregate, None, 0.10)).is_err());
        assert!(create_prereg(inputs(Estimand::Aggregate, Some(5), 0.0)).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let text = serialize_prereg(&doc);
        assert!(text.starts_with("schema: \"prereg/1\"\n"));
        assert_eq!(parse_prereg(&text).unwrap(), doc);
        assert_eq!(serialize_prereg(&parse_prereg(&text).unwrap()), text);
    }

    #[test]
    fn hand_edited_mde_is_tamper() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let text = serialize_prereg(&doc);
        let line = text.lines().find(|l| l.starts_with("mde_pp:")).unwrap();
        let edited = text.replace(line, "mde_pp: 2.0000000000");
        assert!(matches!(parse_prereg(&edited), Err(Error::Tamper(_))));
    }

    #[test]
    fn edited_justification_breaks_hash() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let edited = serialize_prereg(&doc).replace("pilot sensitivity range", "calibration set");
        assert!(matches!(parse_prereg(&edited), Err(Error::Tamper(_))));
    }

    #[test]
    fn timestamp_outside_hash() {
        let (a, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let mut b = a.clone();
        b.created_at = "2030-06-01T12:00:00Z".into();
        assert_eq!(a.content_hash(), b.content_hash());
        let mut c = a.clone();
        c.rho_justification.push('!');
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.computed_mde, c.computed_mde);
    }

    #[test]
    fn unknown_schema_rejected() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let text = serialize_prereg(&doc).replace("prereg/1", "prereg/9");
        assert!(matches!(parse_prereg(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn revision_not_violated_keeps_mde() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let obs = DiscordantCounts::from_discordant(20, 10, 500).unwrap();
        let out = revise(&doc, &obs).unwrap();
        // Wilson one-sided upper at (30, 500): 0.0799507415456224
        assert!((out.u95 - 0.079_950_741_545_622_4).abs() < 1e-12);
        assert!(!out.prior_violated);
        assert_eq!(out.revised_mde.to_bits(), doc.computed_mde.to_bits());
        assert_eq!(out.rho_eff, 0.10);
    }

    #[test]
    fn revision_violated_raises_mde() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.05)).unwrap();
        let obs = DiscordantCounts::from_discordant(25, 15, 500).unwrap();
        let out = revise(&doc, &obs).unwrap();
        // Wilson one-sided upper at (40, 500): 0.102290954807785
        assert!((out.u95 - 0.102_290_954_807_785).abs() < 1e-12);
        assert!(out.prior_violated);
        assert_eq!(out.rho_eff, out.u95);
        assert!(out.revised_mde > doc.computed_mde);
    }

    #[test]
    fn zero_discordant_still_has_positive_upper() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.001)).unwrap();
        let obs = DiscordantCounts::from_discordant(0, 0, 500).unwrap();
        let out = revise(&doc, &obs).unwrap();
        assert!(out.u95 > 0.0);
        assert_eq!(out.prior_violated, out.u95 > 0.001);
    }

    #[test]
    fn mismatched_m_warns() {
        let (doc, _) = create_prereg(inputs(Estimand::Aggregate, Some(5), 0.10)).unwrap();
        let obs = DiscordantCounts::from_discordant(10, 10, 400).unwrap();
        let out = revise(&doc, &obs).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!((out.prereg_m, out.observed_m), (500, 400));
    }
}
