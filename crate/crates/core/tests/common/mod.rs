//! Fixture loading shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load<T: DeserializeOwned>(name: &str) -> T {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    serde_json::from_str(&text).expect("fixture parses")
}

#[derive(Deserialize)]
pub struct Quantiles {
    pub normal_quantiles: Vec<NormalPoint>,
    pub chi_square_quantiles: Vec<ChiPoint>,
}

#[derive(Deserialize)]
pub struct NormalPoint {
    pub p: f64,
    pub z: f64,
}

#[derive(Deserialize)]
pub struct ChiPoint {
    pub df: f64,
    pub p: f64,
    pub x: f64,
}

#[derive(Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd_split: f64,
}

#[derive(Deserialize)]
pub struct Table1Row {
    pub model: String,
    pub benchmark: String,
    pub fp16: MeanSd,
    pub nf4: MeanSd,
}

#[derive(Deserialize)]
pub struct Table1 {
    pub k: u64,
    pub n: u64,
    pub rows: Vec<Table1Row>,
}

#[derive(Deserialize)]
pub struct Table2Row {
    pub model: String,
    pub benchmark: String,
    pub delta: f64,
}

#[derive(Deserialize)]
pub struct Table2 {
    pub m: u64,
    pub rows: Vec<Table2Row>,
}

#[derive(Deserialize)]
pub struct TemplateBlock {
    pub templates: BTreeMap<String, f64>,
    pub range: f64,
}

#[derive(Deserialize)]
pub struct Table3Row {
    pub model: String,
    pub benchmark: String,
    pub fp16: TemplateBlock,
    pub nf4: TemplateBlock,
}

#[derive(Deserialize)]
pub struct Table3 {
    pub n: u64,
    pub rows: Vec<Table3Row>,
}

#[derive(Deserialize)]
pub struct Table4 {
    pub rows: Vec<pairmde::audit::ResidualRow>,
}

#[derive(Deserialize)]
pub struct Table5Row {
    pub model: String,
    pub benchmark: String,
    pub delta_abs: f64,
    pub sd_split_pooled: f64,
    pub sd_prompt_pooled: Option<f64>,
    pub qri_split: f64,
    pub qri_combined: Option<f64>,
}

#[derive(Deserialize)]
pub struct Table5 {
    pub rows: Vec<Table5Row>,
}

#[derive(Deserialize)]
pub struct Table6Row {
    pub model: String,
    pub benchmark: String,
    pub p_hat: f64,
    pub successes: u64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Deserialize)]
pub struct Table6 {
    pub n: u64,
    pub confidence: f64,
    pub rows: Vec<Table6Row>,
}

#[derive(Deserialize)]
pub struct Table7Cell {
    pub delta_pp: f64,
    pub rho_d: f64,
    pub m: u64,
}

#[derive(Deserialize)]
pub struct Table7 {
    pub cells: Vec<Table7Cell>,
}

#[derive(Deserialize)]
pub struct Table8Row {
    pub model: String,
    pub benchmark: String,
    pub delta_abs: f64,
    pub mde_rho_010: f64,
    pub mde_rho_005: f64,
    pub exceeds_rho_010: bool,
    pub exceeds_rho_005: bool,
}

#[derive(Deserialize)]
pub struct Table8 {
    pub m: u64,
    pub rows: Vec<Table8Row>,
}

pub fn table1() -> Table1 {
    load("table1_accuracy.json")
}
pub fn table2() -> Table2 {
    load("table2_deltas.json")
}
pub fn table3() -> Table3 {
    load("table3_prompt.json")
}
pub fn table4() -> Table4 {
    load("table4_residuals.json")
}
pub fn table5() -> Table5 {
    load("table5_qri.json")
}
pub fn table6() -> Table6 {
    load("table6_wilson.json")
}
pub fn table7() -> Table7 {
    load("table7_sample_sizes.json")
}
pub fn table8() -> Table8 {
    load("table8_verdicts.json")
}

/// Prompt SD pooled over both conditions for one prompt-fixture row.
pub fn pooled_prompt_sd(row: &Table3Row) -> f64 {
    use pairmde::audit::{cross_split_sd, rms_pool};
    let sd = |b: &TemplateBlock| {
        cross_split_sd(&b.templates.values().copied().collect::<Vec<_>>()).unwrap()
    };
    rms_pool(sd(&row.fp16), sd(&row.nf4))
}

pub fn find_table3<'a>(t3: &'a Table3, model: &str, benchmark: &str) -> Option<&'a Table3Row> {
    t3.rows
        .iter()
        .find(|r| r.model == model && r.benchmark == benchmark)
}

pub fn find_table1<'a>(t1: &'a Table1, model: &str, benchmark: &str) -> &'a Table1Row {
    t1.rows
        .iter()
        .find(|r| r.model == model && r.benchmark == benchmark)
        .expect("cell present in accuracy fixture")
}
