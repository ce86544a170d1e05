//! Regenerates `fixtures/pilot.jsonl` and `fixtures/pilot.prereg`.
//!
//! The record file is synthetic: per-split correct counts are chosen so that
//! each cell's aggregate accuracy equals the published mean and the split
//! SD approximates the published one. Items are paired across conditions
//! with one extra discordant pair in each direction per split. MMLU cells
//! also carry a three-template sweep of 50 items.
//!
//! Run with `cargo run --example make_pilot`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use pairmde::audit::{write_records, EvalRecord, RecordHeader};
use pairmde::prereg::{create_prereg, serialize_prereg, Estimand, PreRegInputs};
use pairmde::stats::{MdeMode, SignificanceConfig};
use serde_json::Value;

const A: &str = "fp16";
const B: &str = "nf4";

// Mean 0, sample SD 1.
const PATTERN: [f64; 5] = [-1.264_911, -0.632_456, 0.0, 0.632_456, 1.264_911];

fn split_counts(mean: f64, sd: f64, k: usize, n: u64) -> Vec<u64> {
    let total = (mean * (k as f64) * n as f64).round() as i64;
    let base = total as f64 / k as f64;
    let mut counts: Vec<i64> = (0..k)
        .map(|i| (base + sd * n as f64 * PATTERN[i % PATTERN.len()]).round() as i64)
        .collect();
    let mut diff = total - counts.iter().sum::<i64>();
    let mut i = k / 2;
    while diff != 0 {
        let step = diff.signum();
        if (0..=n as i64).contains(&(counts[i] + step)) {
            counts[i] += step;
            diff -= step;
        }
        i = (i + 1) % k;
    }
    counts
        .into_iter()
        .map(|c| c.clamp(0, n as i64) as u64)
        .collect()
}

// Paired outcomes for `n` items with `a` correct under A and `b` under B.
fn paired_outcomes(a: u64, b: u64, n: u64, extra: u64) -> Vec<(bool, bool)> {
    let mut e = extra;
    while e > 0 && (a.saturating_sub(b) + e > a || b.saturating_sub(a) + e > n - a) {
        e -= 1;
    }
    let n10 = a.saturating_sub(b) + e;
    let n01 = b.saturating_sub(a) + e;
    let n11 = a - n10;
    let mut out = Vec::with_capacity(n as usize);
    out.extend(std::iter::repeat_n((true, true), n11 as usize));
    out.extend(std::iter::repeat_n((true, false), n10 as usize));
    out.extend(std::iter::repeat_n((false, true), n01 as usize));
    out.resize(n as usize, (false, false));
    out
}

fn f(v: &Value, path: &[&str]) -> f64 {
    path.iter()
        .fold(v, |v, p| &v[*p])
        .as_f64()
        .expect("numeric fixture field")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let table1: Value = serde_json::from_reader(File::open(root.join("table1_accuracy.json"))?)?;
    let table3: Value = serde_json::from_reader(File::open(root.join("table3_prompt.json"))?)?;
    let k = table1["k"].as_u64().unwrap() as usize;
    let n = table1["n"].as_u64().unwrap();
    let mut records = Vec::new();

    for row in table1["rows"].as_array().unwrap() {
        let model = row["model"].as_str().unwrap();
        let bench = row["benchmark"].as_str().unwrap();
        let ca = split_counts(f(row, &[A, "mean"]), f(row, &[A, "sd_split"]), k, n);
        let cb = split_counts(f(row, &[B, "mean"]), f(row, &[B, "sd_split"]), k, n);
        for split in 0..k {
            for (i, (xa, xb)) in paired_outcomes(ca[split], cb[split], n, 1)
                .into_iter()
                .enumerate()
            {
                let id = format!("{}-s{split}-{i:03}", bench.to_lowercase());
                records.push(EvalRecord::new(
                    model,
                    bench,
                    A,
                    None,
                    split as u32,
                    &id,
                    xa,
                ));
                records.push(EvalRecord::new(
                    model,
                    bench,
                    B,
                    None,
                    split as u32,
                    &id,
                    xb,
                ));
            }
        }
    }

    let n_prompt = table3["n"].as_u64().unwrap();
    for row in table3["rows"].as_array().unwrap() {
        let model = row["model"].as_str().unwrap();
        let bench = row["benchmark"].as_str().unwrap();
        let templates = row[A]["templates"].as_object().unwrap();
        for t in templates.keys() {
            let a = (f(row, &[A, "templates", t]) * n_prompt as f64).round() as u64;
            let b = (f(row, &[B, "templates", t]) * n_prompt as f64).round() as u64;
            for (i, (xa, xb)) in paired_outcomes(a, b, n_prompt, 0).into_iter().enumerate() {
                let id = format!("{}-p{i:02}", bench.to_lowercase());
                records.push(EvalRecord::new(
                    model,
                    bench,
                    A,
                    Some(t.clone()),
                    0,
                    &id,
                    xa,
                ));
                records.push(EvalRecord::new(
                    model,
                    bench,
                    B,
                    Some(t.clone()),
                    0,
                    &id,
                    xb,
                ));
            }
        }
    }

    let header = RecordHeader::new(Some([A.to_string(), B.to_string()]));
    let out = BufWriter::new(File::create(root.join("pilot.jsonl"))?);
    write_records(out, &header, &records)?;

    let (doc, _) = create_prereg(PreRegInputs {
        estimand: Estimand::Aggregate,
        k: Some(k as u64),
        n,
        config: SignificanceConfig::conventional(),
        rho_prior: 0.10,
        rho_justification: "upper end of disagreement rates seen in earlier 4-bit comparisons"
            .into(),
        paired_retention: true,
        mde_mode: MdeMode::ExactQuantile,
        created_at: "2024-01-15T00:00:00Z".into(),
    })?;
    std::fs::write(root.join("pilot.prereg"), serialize_prereg(&doc))?;
    println!(
        "wrote {} records and pilot.prereg to {}",
        records.len(),
        root.display()
    );
    Ok(())
}
