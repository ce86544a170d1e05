use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::record::{EvalRecord, RecordHeader};
use crate::error::{Error, Result};

/// A (model, benchmark) cell. Precision and template are dimensions within it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub benchmark: String,
}

impl CellKey {
    pub fn new(model: impl Into<String>, benchmark: impl Into<String>) -> Self {
        CellKey {
            model: model.into(),
            benchmark: benchmark.into(),
        }
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.model, self.benchmark)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct RecordKey {
    cell: CellKey,
    precision: String,
    template: Option<String>,
    split: u32,
    item_id: String,
}

/// Ingestion options; `conditions` and `primary_template` override the file header.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub conditions: Option<[String; 2]>,
    pub primary_template: Option<String>,
}

impl From<&RecordHeader> for IngestOptions {
    fn from(h: &RecordHeader) -> Self {
        IngestOptions {
            conditions: h.conditions.clone(),
            primary_template: h.primary_template.clone(),
        }
    }
}

/// Per-cell record counts reported after ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub cell: CellKey,
    /// Records per condition label.
    pub per_precision: BTreeMap<String, u64>,
    /// Items of the split study present under both conditions.
    pub paired_items: u64,
    /// Items of the split study present under at least one condition.
    pub union_items: u64,
}

impl CellCounts {
    pub fn pairing_coverage(&self) -> Option<f64> {
        (self.union_items > 0).then(|| self.paired_items as f64 / self.union_items as f64)
    }
}

/// Deduplicated, indexed evaluation records. Immutable after construction.
#[derive(Debug, Clone)]
pub struct RecordSet {
    conditions: Vec<String>,
    primary_template: Option<String>,
    records: BTreeMap<RecordKey, bool>,
    duplicates: u64,
    warnings: Vec<String>,
}

/// (split, item_id) -> correct, for one cell, condition and template.
pub type ItemOutcomes = BTreeMap<(u32, String), bool>;

const MAX_LISTED_CONFLICTS: usize = 20;

/// Build a [`RecordSet`] from a record stream.
///
/// Exact duplicates are dropped; duplicates with conflicting correctness are
/// a validation error listing the offending keys. The result does not depend
/// on the order of the stream.
pub fn ingest_records<I>(records: I, options: &IngestOptions) -> Result<RecordSet>
where
    I: IntoIterator<Item = EvalRecord>,
{
    let mut map: BTreeMap<RecordKey, bool> = BTreeMap::new();
    let mut conflicts: BTreeSet<String> = BTreeSet::new();
    let mut duplicates = 0u64;
    let mut seen_conditions: BTreeSet<String> = BTreeSet::new();

    for rec in records {
        rec.validate()?;
        seen_conditions.insert(rec.precision.clone());
        let key = RecordKey {
            cell: CellKey::new(rec.model, rec.benchmark),
            precision: rec.precision,
            template: rec.template,
            split: rec.split,
            item_id: rec.item_id,
        };
        match map.get(&key) {
            Some(&prev) if prev == rec.correct => duplicates += 1,
            Some(_) => {
                conflicts.insert(format!(
                    "{} precision={} template={} split={} item_id={}",
                    key.cell,
                    key.precision,
                    key.template.as_deref().unwrap_or("-"),
                    key.split,
                    key.item_id
                ));
            }
            None => {
                map.insert(key, rec.correct);
            }
        }
    }

    if !conflicts.is_empty() {
        let listed: Vec<&str> = conflicts
            .iter()
            .take(MAX_LISTED_CONFLICTS)
            .map(String::as_str)
            .collect();
        let more = conflicts.len().saturating_sub(MAX_LISTED_CONFLICTS);
        let suffix = if more > 0 {
            format!(" (and {more} more)")
        } else {
            String::new()
        };
        return Err(Error::validation(format!(
            "{} duplicate record key(s) with conflicting correctness: {}{}",
            conflicts.len(),
            listed.join("; "),
            suffix
        )));
    }

    let conditions = match &options.conditions {
        Some([a, b]) => {
            if a == b {
                return Err(Error::validation("the two declared conditions must differ"));
            }
            if let Some(bad) = seen_conditions.iter().find(|c| *c != a && *c != b) {
                return Err(Error::validation(format!(
                    "precision label {bad:?} is not one of the declared conditions [{a:?}, {b:?}]"
                )));
            }
            vec![a.clone(), b.clone()]
        }
        None => {
            if seen_conditions.len() > 2 {
                return Err(Error::validation(format!(
                    "an audit compares exactly two conditions, found {}: {:?}",
                    seen_conditions.len(),
                    seen_conditions
                )));
            }
            seen_conditions.into_iter().collect()
        }
    };

    let mut set = RecordSet {
        conditions,
        primary_template: options.primary_template.clone(),
        records: map,
        duplicates,
        warnings: Vec::new(),
    };
    if duplicates > 0 {
        set.warnings
            .push(format!("dropped {duplicates} exact duplicate record(s)"));
    }
    let mut coverage_warnings = Vec::new();
    for counts in set.cell_counts() {
        if let Some(cov) = counts.pairing_coverage() {
            if cov < 1.0 {
                coverage_warnings.push(format!(
                    "{}: pairing coverage {}/{} ({:.4}); paired statistics use the paired subset only",
                    counts.cell, counts.paired_items, counts.union_items, cov
                ));
            }
        }
    }
    set.warnings.extend(coverage_warnings);
    Ok(set)
}

impl RecordSet {
    /// Condition labels in `[A, B]` order (fewer if the stream held fewer).
    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn condition_pair(&self) -> Option<(&str, &str)> {
        match self.conditions.as_slice() {
            [a, b] => Some((a.as_str(), b.as_str())),
            _ => None,
        }
    }

    pub fn primary_template(&self) -> Option<&str> {
        self.primary_template.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duplicates_dropped(&self) -> u64 {
        self.duplicates
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn cells(&self) -> BTreeSet<CellKey> {
        self.records.keys().map(|k| k.cell.clone()).collect()
    }

    /// Outcomes of one cell and condition under a template (`None` = untemplated).
    pub fn outcomes(
        &self,
        cell: &CellKey,
        precision: &str,
        template: Option<&str>,
    ) -> ItemOutcomes {
        self.records
            .iter()
            .filter(|(k, _)| {
                &k.cell == cell && k.precision == precision && k.template.as_deref() == template
            })
            .map(|(k, &c)| ((k.split, k.item_id.clone()), c))
            .collect()
    }

    /// Outcomes of the split study for one cell and condition.
    pub fn split_outcomes(&self, cell: &CellKey, precision: &str) -> ItemOutcomes {
        self.outcomes(cell, precision, self.primary_template())
    }

    /// Template labels present in a cell, across both conditions.
    pub fn templates(&self, cell: &CellKey) -> BTreeSet<String> {
        self.records
            .keys()
            .filter(|k| &k.cell == cell)
            .filter_map(|k| k.template.clone())
            .collect()
    }

    pub fn cell_counts(&self) -> Vec<CellCounts> {
        self.cells()
            .into_iter()
            .map(|cell| {
                let mut per_precision = BTreeMap::new();
                for k in self.records.keys().filter(|k| k.cell == cell) {
                    *per_precision.entry(k.precision.clone()).or_insert(0) += 1;
                }
                let (paired_items, union_items) = match self.condition_pair() {
                    Some((a, b)) => {
                        let ia = self.split_outcomes(&cell, a);
                        let ib = self.split_outcomes(&cell, b);
                        let paired = ia.keys().filter(|k| ib.contains_key(*k)).count() as u64;
                        let union = ia.len() as u64 + ib.len() as u64 - paired;
                        (paired, union)
                    }
                    None => {
                        let n = self
                            .conditions
                            .first()
                            .map(|a| self.split_outcomes(&cell, a).len() as u64)
                            .unwrap_or(0);
                        (0, n)
                    }
                };
                CellCounts {
                    cell,
                    per_precision,
                    paired_items,
                    union_items,
                }
            })
            .collect()
    }

    /// Fraction of split-study items present under both conditions.
    pub fn pairing_coverage(&self, cell: &CellKey) -> Option<f64> {
        self.cell_counts()
            .into_iter()
            .find(|c| &c.cell == cell)
            .and_then(|c| c.pairing_coverage())
    }
}
