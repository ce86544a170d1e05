//! The `paired-eval/1` newline-delimited record format.
//!
//! Each non-empty line is a JSON object. The first line is either a header
//! (`{"schema": "paired-eval/1", ...}` without record fields) or a record
//! that carries the `schema` field itself. A header may declare the two
//! conditions in order `[A, B]` and the template used for the split study.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const RECORD_SCHEMA: &str = "paired-eval/1";

/// One item's correctness under one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub benchmark: String,
    pub precision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub split: u32,
    pub item_id: String,
    pub correct: bool,
    /// Fields outside the schema, kept verbatim.
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl EvalRecord {
    pub fn new(
        model: impl Into<String>,
        benchmark: impl Into<String>,
        precision: impl Into<String>,
        template: Option<String>,
        split: u32,
        item_id: impl Into<String>,
        correct: bool,
    ) -> Self {
        EvalRecord {
            model: model.into(),
            benchmark: benchmark.into(),
            precision: precision.into(),
            template,
            split,
            item_id: item_id.into(),
            correct,
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::validation("item_id must be non-empty"));
        }
        if self.model.is_empty() || self.benchmark.is_empty() || self.precision.is_empty() {
            return Err(Error::validation(
                "model, benchmark and precision must be non-empty",
            ));
        }
        Ok(())
    }
}

/// Header of a record file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema: String,
    /// Condition labels in `[A, B]` order; deltas are reported as `B - A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<[String; 2]>,
    /// Template label of the split study; `None` selects untemplated records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_template: Option<String>,
}

impl RecordHeader {
    pub fn new(conditions: Option<[String; 2]>) -> Self {
        RecordHeader {
            schema: RECORD_SCHEMA.to_string(),
            conditions,
            primary_template: None,
        }
    }
}

/// Parse a `paired-eval/1` stream.
pub fn read_records<R: BufRead>(reader: R) -> Result<(RecordHeader, Vec<EvalRecord>)> {
    let mut header: Option<RecordHeader> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut obj: serde_json::Map<String, Value> = serde_json::from_str(trimmed)
            .map_err(|e| Error::parse(lineno, format!("not a JSON object: {e}")))?;
        let schema = obj.remove("schema");
        if let Some(schema) = &schema {
            if schema.as_str() != Some(RECORD_SCHEMA) {
                return Err(Error::parse(
                    lineno,
                    format!("unsupported schema {schema}, expected \"{RECORD_SCHEMA}\""),
                ));
            }
        }
        if header.is_none() {
            if schema.is_none() {
                return Err(Error::parse(
                    lineno,
                    format!("first line must declare schema \"{RECORD_SCHEMA}\""),
                ));
            }
            if !obj.contains_key("item_id") {
                obj.insert("schema".into(), Value::String(RECORD_SCHEMA.into()));
                let h: RecordHeader = serde_json::from_value(Value::Object(obj))
                    .map_err(|e| Error::parse(lineno, format!("bad header: {e}")))?;
                header = Some(h);
                continue;
            }
            header = Some(RecordHeader::new(None));
        }
        let record: EvalRecord = serde_json::from_value(Value::Object(obj))
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        records.push(record);
    }
    Ok((header.unwrap_or_else(|| RecordHeader::new(None)), records))
}

/// Write a header line followed by one line per record.
pub fn write_records<W: Write>(
    mut writer: W,
    header: &RecordHeader,
    records: &[EvalRecord],
) -> std::io::Result<()> {
    serde_json::to_writer(&mut writer, header)?;
    writeln!(writer)?;
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_records() {
        let text = r#"{"schema":"paired-eval/1","conditions":["fp16","nf4"]}
{"model":"m","benchmark":"b","precision":"fp16","split":0,"item_id":"q1","correct":true,"latency_ms":12}

{"model":"m","benchmark":"b","precision":"nf4","template":"T0","split":0,"item_id":"q1","correct":false}
"#;
        let (header, records) = read_records(text.as_bytes()).unwrap();
        assert_eq!(
            header.conditions,
            Some(["fp16".to_string(), "nf4".to_string()])
        );
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].extra["latency_ms"], 12);
        assert_eq!(records[1].template.as_deref(), Some("T0"));
    }

    #[test]
    fn schema_on_first_record() {
        let text = r#"{"schema":"paired-eval/1","model":"m","benchmark":"b","precision":"a","split":1,"item_id":"x","correct":true}"#;
        let (_, records) = read_records(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].extra.is_empty());
    }

    #[test]
    fn missing_schema_rejected() {
        let text = r#"{"model":"m","benchmark":"b","precision":"a","split":1,"item_id":"x","correct":true}"#;
        assert!(matches!(
            read_records(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = r#"{"schema":"paired-eval/2"}"#;
        assert!(matches!(
            read_records(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_field_reports_line() {
        let text = r#"{"schema":"paired-eval/1"}
{"model":"m","benchmark":"b","precision":"a","split":1,"item_id":"x","correct":true}
{"model":"m","benchmark":"b","precision":"a","split":1,"correct":true}"#;
        match read_records(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("item_id"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_item_id_rejected() {
        let text = r#"{"schema":"paired-eval/1"}
{"model":"m","benchmark":"b","precision":"a","split":1,"item_id":"","correct":true}"#;
        assert!(matches!(
            read_records(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let records = vec![
            EvalRecord::new("m", "b", "fp16", None, 0, "i0", true),
            EvalRecord::new("m", "b", "nf4", Some("T1".into()), 3, "i0", false),
        ];
        let header = RecordHeader::new(Some(["fp16".into(), "nf4".into()]));
        let mut buf = Vec::new();
        write_records(&mut buf, &header, &records).unwrap();
        let (h, back) = read_records(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, records);
    }
}
