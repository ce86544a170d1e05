//! Record ingestion and per-cell diagnostics.
//!
//! Records are keyed by (model, benchmark, precision, template, split,
//! item_id). A cell is a (model, benchmark) pair; the two precisions and
//! any prompt templates are dimensions inside it. Pairing is by item_id
//! within (benchmark, split).

mod diagnostics;
mod ingest;
mod record;
mod summary;

pub use diagnostics::{
    mde_verdict, qri, qri_from_parts, residual_analysis, BandCount, MdeVerdict, QriReport, Ratio,
    ResidualAnalysis, VerdictEntry, VERDICT_CAVEAT,
};
pub use ingest::{ingest_records, CellCounts, CellKey, IngestOptions, ItemOutcomes, RecordSet};
pub use record::{read_records, write_records, EvalRecord, RecordHeader, RECORD_SCHEMA};
pub use summary::{
    cross_split_sd, discordant_counts, quant_delta, rms_pool, summarize_cell, summarize_prompts,
    CellSummary, PairedCounts, PairingMode, PrecisionSummary, PromptSummary, ResidualRow,
    TemplateSpread,
};
