//! The `pairmde` command line.
//!
//! Units at the boundary: effect sizes are read in percentage points
//! (`--delta-pp`), rates and probabilities as proportions (`--rho`,
//! `--alpha`, `--power`). MDEs are printed in pp, machine output keeps
//! proportions.
//!
//! `--config FILE` supplies flags from a TOML file. Keys are long flag names
//! without dashes, grouped in a table per subcommand (`[mde]`,
//! `[prereg.new]`, ...). Flags given on the command line take precedence.
//! `PAIRMDE_OUT_DIR` only sets the directory used when a command writes a
//! file and no explicit output path is given.
//!
//! Exit status: 0 success, 2 usage, 3 parse, 4 validation or domain,
//! 5 I/O, 6 numerical.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::audit::{
    discordant_counts, ingest_records, read_records, IngestOptions, PairingMode, RecordSet,
};
use crate::error::{Error, Result};
use crate::mc::{run_sweep, simulate_split_sd_with, SweepConfig};
use crate::prereg::{
    create_prereg, parse_prereg, revise, serialize_prereg, CellRevision, Estimand, PreRegInputs,
    PreRegistration, RevisionReport,
};
use crate::report::{
    build_audit, pp, render_report, AuditOptions, AuditReport, InputHash, ReportFormat,
};
use crate::stats::{
    mde_bound, mde_coefficient, mde_implicit, required_sample_size, wilson_interval, wilson_upper,
    DiscordantCounts, McNemarVariant, MdeInputs, MdeMode, SampleSizeMode, Sidedness,
    SignificanceConfig,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;

pub const OUT_DIR_ENV: &str = "PAIRMDE_OUT_DIR";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => EXIT_PARSE,
        Error::Validation(_) | Error::Domain(_) | Error::Tamper(_) => EXIT_VALIDATION,
        Error::Io { .. } => EXIT_IO,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "pairmde",
    version,
    about = "Power planning and audits for paired benchmark comparisons"
)]
#[command(args_override_self = true)]
struct Cli {
    /// TOML file supplying default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimum detectable effect for a paired design.
    Mde(MdeArgs),
    /// Paired items needed to detect an effect.
    Samplesize(SampleSizeArgs),
    /// Create, check or revise a pre-registration.
    #[command(subcommand)]
    Prereg(PreregCommand),
    /// Audit a per-example record file.
    Audit(AuditArgs),
    /// Wilson score interval for a binomial proportion.
    Wilson(WilsonArgs),
    /// Run a Monte Carlo power sweep.
    PowerSim(PowerSimArgs),
    /// Simulate the sampling distribution of a cross-split SD.
    SplitSd(SplitSdArgs),
    /// Render a stored machine-format audit report.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.80)]
    power: f64,
    #[arg(long, value_enum, default_value_t = SidednessArg::Two)]
    sidedness: SidednessArg,
}

impl DesignArgs {
    fn config(&self) -> Result<SignificanceConfig> {
        SignificanceConfig::with_sidedness(self.alpha, self.power, self.sidedness.into())
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SidednessArg {
    One,
    Two,
}

impl From<SidednessArg> for Sidedness {
    fn from(s: SidednessArg) -> Self {
        match s {
            SidednessArg::One => Sidedness::One,
            SidednessArg::Two => Sidedness::Two,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum OutputFormat {
    Text,
    Machine,
}

#[derive(Args, Debug)]
struct MdeArgs {
    /// Paired item count.
    #[arg(long)]
    m: u64,
    /// Disagreement rate (proportion).
    #[arg(long)]
    rho: f64,
    #[command(flatten)]
    design: DesignArgs,
    /// Use the 2.80 coefficient of the conventional design.
    #[arg(long)]
    paper_compat: bool,
    /// Also solve the alternative-variance MDE.
    #[arg(long)]
    implicit: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct SampleSizeArgs {
    /// Effect size(s) in percentage points, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    delta_pp: Vec<f64>,
    /// Disagreement rate(s) as proportions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    rho: Vec<f64>,
    #[command(flatten)]
    design: DesignArgs,
    /// Coefficient 2.80 and nearest-integer rounding.
    #[arg(long)]
    paper_compat: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Subcommand, Debug)]
enum PreregCommand {
    /// Write a new pre-registration document.
    New(PreregNewArgs),
    /// Verify a document's MDE and content hash.
    Check(PreregCheckArgs),
    /// Apply the disagreement-rate revision rule to observed counts.
    Revise(PreregReviseArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EstimandArg {
    SingleSplit,
    Aggregate,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MdeModeArg {
    Exact,
    PaperCompat,
}

impl From<MdeModeArg> for MdeMode {
    fn from(m: MdeModeArg) -> Self {
        match m {
            MdeModeArg::Exact => MdeMode::ExactQuantile,
            MdeModeArg::PaperCompat => MdeMode::PaperCompat,
        }
    }
}

#[derive(Args, Debug)]
struct PreregNewArgs {
    #[arg(long, value_enum)]
    estimand: EstimandArg,
    /// Number of splits (aggregate estimand).
    #[arg(long)]
    k: Option<u64>,
    /// Items per split.
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    design: DesignArgs,
    /// Disagreement-rate prior (proportion).
    #[arg(long)]
    rho_prior: f64,
    /// Where the prior comes from.
    #[arg(long, default_value = "")]
    justification: String,
    /// Commit to retaining per-item paired outputs.
    #[arg(long)]
    paired_retention: bool,
    #[arg(long, value_enum, default_value_t = MdeModeArg::Exact)]
    mde_mode: MdeModeArg,
    /// RFC 3339 timestamp; defaults to now (UTC).
    #[arg(long)]
    created_at: Option<String>,
    /// Output path; `-` for standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreregCheckArgs {
    #[arg(long)]
    prereg: PathBuf,
}

#[derive(Args, Debug)]
struct PreregReviseArgs {
    #[arg(long)]
    prereg: PathBuf,
    /// Per-example records; revises every cell.
    #[arg(long, conflicts_with_all = ["n10", "n01", "m"])]
    records: Option<PathBuf>,
    /// Items correct under condition A only.
    #[arg(long, requires_all = ["n01", "m"])]
    n10: Option<u64>,
    /// Items correct under condition B only.
    #[arg(long)]
    n01: Option<u64>,
    /// Observed paired item count.
    #[arg(long)]
    m: Option<u64>,
    #[command(flatten)]
    pairing: PairingArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct PairingArgs {
    /// Drop unpaired items when coverage is at least this fraction.
    #[arg(long, value_name = "MIN_COVERAGE")]
    lenient: Option<f64>,
    /// Condition labels A,B (overrides the file header).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    conditions: Option<Vec<String>>,
    /// Template whose records form the split study.
    #[arg(long)]
    primary_template: Option<String>,
}

impl PairingArgs {
    fn mode(&self) -> Result<PairingMode> {
        match self.lenient {
            None => Ok(PairingMode::Strict),
            Some(c) if (0.0..=1.0).contains(&c) => Ok(PairingMode::Lenient { min_coverage: c }),
            Some(c) => Err(Error::validation(format!(
                "--lenient must lie in [0, 1], got {c}"
            ))),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ReportFormatArg {
    Text,
    Markdown,
    Machine,
}

impl From<ReportFormatArg> for ReportFormat {
    fn from(f: ReportFormatArg) -> Self {
        match f {
            ReportFormatArg::Text => ReportFormat::Text,
            ReportFormatArg::Markdown => ReportFormat::Markdown,
            ReportFormatArg::Machine => ReportFormat::Machine,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum McNemarArg {
    Asymptotic,
    Exact,
    MidP,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    prereg: Option<PathBuf>,
    #[command(flatten)]
    pairing: PairingArgs,
    #[command(flatten)]
    design: DesignArgs,
    /// Disagreement rates for the MDE comparison.
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.05])]
    verdict_rho: Vec<f64>,
    /// Residual bands (proportions).
    #[arg(long, value_delimiter = ',', default_values_t = [0.015, 0.020])]
    bands: Vec<f64>,
    #[arg(long, value_enum, default_value_t = McNemarArg::Exact)]
    mcnemar: McNemarArg,
    #[arg(long, value_enum, default_value_t = ReportFormatArg::Text)]
    format: ReportFormatArg,
    /// Rendered report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the machine report here.
    #[arg(long)]
    machine_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WilsonArgs {
    #[arg(long)]
    successes: u64,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// One-sided upper bound instead of the two-sided interval.
    #[arg(long)]
    upper: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args, Debug)]
struct PowerSimArgs {
    /// Sweep file (JSON, or TOML by extension).
    #[arg(long)]
    sweep: PathBuf,
    /// Sweep seed; entries without their own seed derive one from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Delimited results table (includes runtime).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Deterministic machine report (no runtime).
    #[arg(long)]
    machine_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitSdArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Machine-format audit report.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormatArg::Markdown)]
    format: ReportFormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run with process stdout/stderr and the real environment.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, out_dir, &mut stdout.lock(), &mut stderr.lock())
}

/// Run with explicit output sinks and default output directory.
pub fn run_with<I, T>(
    argv: I,
    out_dir: Option<PathBuf>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse_with_config(&argv) {
        Ok(cli) => cli,
        Err(Failure::Clap(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
        Err(Failure::Lib(e)) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let ctx = Ctx { out_dir, out, err };
    match dispatch(cli.command, ctx) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

enum Failure {
    Clap(clap::Error),
    Lib(Error),
}

fn parse_with_config(argv: &[OsString]) -> std::result::Result<Cli, Failure> {
    let Some((path, sub_path)) = scan_config(argv) else {
        return Cli::try_parse_from(argv).map_err(Failure::Clap);
    };
    let text = read_text(&path).map_err(Failure::Lib)?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| Failure::Lib(Error::parse(0, format!("config {}: {e}", path.display()))))?;
    let mut section = Some(&table);
    for name in &sub_path {
        section = section.and_then(|t| t.get(name)).and_then(|v| v.as_table());
    }
    let Some(section) = section else {
        return Cli::try_parse_from(argv).map_err(Failure::Clap);
    };
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in section {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => injected.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar_text).collect();
                injected.push(flag.into());
                injected.push(joined.join(",").into());
            }
            other => {
                injected.push(flag.into());
                injected.push(scalar_text(other).into());
            }
        }
    }
    // program, subcommand path, config flags, then the user's remaining arguments
    let mut rebuilt: Vec<OsString> = vec![argv[0].clone()];
    rebuilt.extend(sub_path.iter().map(OsString::from));
    rebuilt.extend(injected);
    let mut pending = sub_path.iter().peekable();
    for arg in &argv[1..] {
        if pending
            .peek()
            .is_some_and(|name| arg.to_str() == Some(name.as_str()))
        {
            pending.next();
            continue;
        }
        rebuilt.push(arg.clone());
    }
    Cli::try_parse_from(rebuilt).map_err(Failure::Clap)
}

// Locate `--config` and the subcommand path without a full parse, since
// required flags may come from the config file itself.
fn scan_config(argv: &[OsString]) -> Option<(PathBuf, Vec<String>)> {
    use clap::CommandFactory;
    let mut config = None;
    let mut path = Vec::new();
    let mut command = Cli::command();
    let mut args = argv.iter().skip(1);
    while let Some(arg) = args.next() {
        let s = arg.to_str()?;
        if s == "--config" {
            config = args.next().map(PathBuf::from);
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if !s.starts_with('-') {
            if let Some(sub) = command.find_subcommand(s).cloned() {
                path.push(sub.get_name().to_string());
                command = sub;
            }
        }
    }
    config.map(|c| (c, path))
}

fn scalar_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct Ctx<'a> {
    out_dir: Option<PathBuf>,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn print(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(self.err, "{text}");
    }

    /// Write to an explicit path, else to `default_name` in the output
    /// directory, else to stdout.
    fn emit(&mut self, explicit: Option<&Path>, default_name: &str, text: &str) -> Result<()> {
        let target = match explicit {
            Some(p) if p == Path::new("-") => None,
            Some(p) => Some(p.to_path_buf()),
            None => self.out_dir.as_ref().map(|d| d.join(default_name)),
        };
        match target {
            None => self.print(text),
            Some(path) => {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)
                        .map_err(|e| Error::io(parent.display().to_string(), e))?;
                }
                fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
                self.note(&format!("wrote {}", path.display()));
                Ok(())
            }
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn json_line(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serialises");
    s.push('\n');
    s
}

fn dispatch(command: Command, mut ctx: Ctx<'_>) -> Result<()> {
    match command {
        Command::Mde(a) => cmd_mde(a, &mut ctx),
        Command::Samplesize(a) => cmd_samplesize(a, &mut ctx),
        Command::Prereg(PreregCommand::New(a)) => cmd_prereg_new(a, &mut ctx),
        Command::Prereg(PreregCommand::Check(a)) => cmd_prereg_check(a, &mut ctx),
        Command::Prereg(PreregCommand::Revise(a)) => cmd_prereg_revise(a, &mut ctx),
        Command::Audit(a) => cmd_audit(a, &mut ctx),
        Command::Wilson(a) => cmd_wilson(a, &mut ctx),
        Command::PowerSim(a) => cmd_power_sim(a, &mut ctx),
        Command::SplitSd(a) => cmd_split_sd(a, &mut ctx),
        Command::Report(a) => cmd_report(a, &mut ctx),
    }
}

fn sidedness_label(s: Sidedness) -> &'static str {
    match s {
        Sidedness::One => "one-sided",
        Sidedness::Two => "two-sided",
    }
}

fn cmd_mde(a: MdeArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let config = a.design.config()?;
    let inputs = MdeInputs::new(a.m, a.rho, config)?;
    let mode = if a.paper_compat {
        MdeMode::PaperCompat
    } else {
        MdeMode::ExactQuantile
    };
    let coefficient = mde_coefficient(&config, mode)?;
    let mde = mde_bound(&inputs, mode)?;
    let implicit = if a.implicit {
        Some(mde_implicit(&inputs)?)
    } else {
        None
    };
    let mode_label = if a.paper_compat {
        "paper-compat"
    } else {
        "exact-quantile"
    };
    match a.format {
        OutputFormat::Machine => ctx.print(&json_line(&json!({
            "m": a.m,
            "rho_d": a.rho,
            "alpha": config.alpha,
            "power": config.power,
            "sidedness": config.sidedness,
            "mode": mode_label,
            "coefficient": coefficient,
            "mde": mde,
            "mde_implicit": implicit,
        }))),
        OutputFormat::Text => {
            let mut text = format!(
                "MDE: {:.2} pp (proportion {mde:.6}; m={}, rho_d={}, alpha={}, power={}, {}, {mode_label}, coefficient {coefficient:.4})\n",
                mde * 100.0,
                a.m,
                a.rho,
                config.alpha,
                config.power,
                sidedness_label(config.sidedness),
            );
            if let Some(i) = implicit {
                text.push_str(&format!(
                    "implicit MDE: {:.2} pp (proportion {i:.6})\n",
                    i * 100.0
                ));
            }
            ctx.print(&text)
        }
    }
}

fn cmd_samplesize(a: SampleSizeArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let config = a.design.config()?;
    let mode = if a.paper_compat {
        SampleSizeMode::PaperCompat
    } else {
        SampleSizeMode::ConservativeCeil
    };
    let mut rows = Vec::new();
    for &rho in &a.rho {
        for &d in &a.delta_pp {
            rows.push((d, rho, required_sample_size(d / 100.0, rho, &config, mode)?));
        }
    }
    match a.format {
        OutputFormat::Machine => {
            let cells: Vec<_> = rows
                .iter()
                .map(|(d, rho, m)| json!({"delta_pp": d, "rho_d": rho, "m": m}))
                .collect();
            ctx.print(&json_line(&json!({
                "alpha": config.alpha,
                "power": config.power,
                "sidedness": config.sidedness,
                "mode": if a.paper_compat { "paper-compat" } else { "conservative-ceil" },
                "cells": cells,
            })))
        }
        OutputFormat::Text if rows.len() == 1 => ctx.print(&format!("{}\n", rows[0].2)),
        OutputFormat::Text => {
            let mut text = String::from("rho_d");
            for d in &a.delta_pp {
                text.push_str(&format!("\tdelta={d}pp"));
            }
            text.push('\n');
            for chunk in rows.chunks(a.delta_pp.len()) {
                text.push_str(&chunk[0].1.to_string());
                for (_, _, m) in chunk {
                    text.push_str(&format!("\t{m}"));
                }
                text.push('\n');
            }
            ctx.print(&text)
        }
    }
}

fn cmd_prereg_new(a: PreregNewArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let created_at = a
        .created_at
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let (doc, warnings) = create_prereg(PreRegInputs {
        estimand: match a.estimand {
            EstimandArg::SingleSplit => Estimand::SingleSplit,
            EstimandArg::Aggregate => Estimand::Aggregate,
        },
        k: a.k,
        n: a.n,
        config: a.design.config()?,
        rho_prior: a.rho_prior,
        rho_justification: a.justification,
        paired_retention: a.paired_retention,
        mde_mode: a.mde_mode.into(),
        created_at,
    })?;
    for w in warnings {
        ctx.note(&format!("warning: {w}"));
    }
    ctx.emit(a.out.as_deref(), "pairmde.prereg", &serialize_prereg(&doc))
}

fn load_prereg(path: &Path) -> Result<PreRegistration> {
    parse_prereg(&read_text(path)?)
}

fn cmd_prereg_check(a: PreregCheckArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let doc = load_prereg(&a.prereg)?;
    ctx.print(&format!(
        "ok: {} m={} rho_prior={} mde={} pp hash={}\n",
        a.prereg.display(),
        doc.m,
        doc.rho_prior,
        pp(doc.computed_mde),
        doc.content_hash()
    ))
}

fn load_records(path: &Path, pairing: &PairingArgs) -> Result<(RecordSet, InputHash)> {
    let bytes = read_bytes(path)?;
    let hash = InputHash::of_bytes(path.display().to_string(), &bytes);
    let (header, records) = read_records(&bytes[..])?;
    let mut opts = IngestOptions::from(&header);
    if let Some(c) = &pairing.conditions {
        opts.conditions = Some([c[0].clone(), c[1].clone()]);
    }
    if let Some(t) = &pairing.primary_template {
        opts.primary_template = Some(t.clone());
    }
    Ok((ingest_records(records, &opts)?, hash))
}

fn cmd_prereg_revise(a: PreregReviseArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let doc = load_prereg(&a.prereg)?;
    let mut revisions = Vec::new();
    if let Some(path) = &a.records {
        let (records, _) = load_records(path, &a.pairing)?;
        let mode = a.pairing.mode()?;
        for cell in records.cells() {
            let paired = discordant_counts(&records, &cell, mode)?;
            for w in &paired.warnings {
                ctx.note(&format!("warning: {w}"));
            }
            revisions.push(CellRevision {
                model: cell.model.clone(),
                benchmark: cell.benchmark.clone(),
                outcome: revise(&doc, &paired.counts)?,
            });
        }
    } else {
        let (Some(n10), Some(n01), Some(m)) = (a.n10, a.n01, a.m) else {
            return Err(Error::validation(
                "give --records or all of --n10, --n01, --m",
            ));
        };
        let counts = DiscordantCounts::from_discordant(n10, n01, m)?;
        revisions.push(CellRevision {
            model: String::new(),
            benchmark: String::new(),
            outcome: revise(&doc, &counts)?,
        });
    }
    let report = RevisionReport::new(doc, revisions);
    let text = match a.format {
        OutputFormat::Machine => {
            let mut s = serde_json::to_string_pretty(&report).expect("revision report serialises");
            s.push('\n');
            s
        }
        OutputFormat::Text => revision_text(&report),
    };
    ctx.emit(a.out.as_deref(), "revision.txt", &text)
}

fn revision_text(report: &RevisionReport) -> String {
    let mut s = format!(
        "prereg {} m={} rho_prior={} mde={} pp\n",
        report.content_hash,
        report.prereg.m,
        report.prereg.rho_prior,
        pp(report.prereg.computed_mde)
    );
    for r in &report.revisions {
        let o = &r.outcome;
        let label = if r.model.is_empty() {
            "counts".to_string()
        } else {
            format!("{}/{}", r.model, r.benchmark)
        };
        s.push_str(&format!(
            "{label}: discordant={} m={} u95={:.4} violated={} rho_eff={:.4} mde={} pp borderline={}\n",
            o.observed.discordant(),
            o.observed_m,
            o.u95,
            if o.prior_violated { "yes" } else { "no" },
            o.rho_eff,
            pp(o.revised_mde),
            if o.borderline_flag { "yes" } else { "no" },
        ));
        for w in &o.warnings {
            s.push_str(&format!("  warning: {w}\n"));
        }
    }
    if report.multiplicity_flag {
        s.push_str("note: more than one cell violated the prior; alpha is not corrected\n");
    }
    s
}

fn report_extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Text => "txt",
        ReportFormat::Markdown => "md",
        ReportFormat::Machine => "json",
    }
}

fn cmd_audit(a: AuditArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let (records, records_hash) = load_records(&a.records, &a.pairing)?;
    let mut inputs = vec![records_hash];
    let prereg = match &a.prereg {
        Some(path) => {
            let bytes = read_bytes(path)?;
            inputs.push(InputHash::of_bytes(path.display().to_string(), &bytes));
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::parse(0, format!("{}: {e}", path.display())))?;
            Some(parse_prereg(&text)?)
        }
        None => None,
    };
    let options = AuditOptions {
        pairing: a.pairing.mode()?,
        config: a.design.config()?,
        verdict_rhos: a.verdict_rho.clone(),
        bands: a.bands.clone(),
        mcnemar_variant: match a.mcnemar {
            McNemarArg::Asymptotic => McNemarVariant::Asymptotic,
            McNemarArg::Exact => McNemarVariant::Exact,
            McNemarArg::MidP => McNemarVariant::MidP,
        },
    };
    let report = build_audit(&records, prereg.as_ref(), &options, inputs)?;
    let format: ReportFormat = a.format.into();
    let name = format!("audit.{}", report_extension(format));
    ctx.emit(a.out.as_deref(), &name, &render_report(&report, format))?;
    if let Some(path) = &a.machine_out {
        ctx.emit(
            Some(path),
            "audit.json",
            &render_report(&report, ReportFormat::Machine),
        )?;
    }
    Ok(())
}

fn cmd_wilson(a: WilsonArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    if a.upper {
        let u = wilson_upper(a.successes, a.n, a.confidence)?;
        return match a.format {
            OutputFormat::Machine => ctx.print(&json_line(&json!({
                "successes": a.successes, "n": a.n, "confidence": a.confidence, "upper": u,
            }))),
            OutputFormat::Text => ctx.print(&format!(
                "one-sided {}% upper bound: {u:.6} ({} pp)\n",
                a.confidence * 100.0,
                pp(u)
            )),
        };
    }
    let ci = wilson_interval(a.successes, a.n, a.confidence)?;
    match a.format {
        OutputFormat::Machine => ctx.print(&json_line(&json!({
            "successes": a.successes, "n": a.n, "confidence": a.confidence,
            "lower": ci.lower, "upper": ci.upper,
        }))),
        OutputFormat::Text => ctx.print(&format!(
            "{}% Wilson interval: [{:.4}, {:.4}] ([{}, {}] pp)\n",
            a.confidence * 100.0,
            ci.lower,
            ci.upper,
            pp(ci.lower),
            pp(ci.upper)
        )),
    }
}

fn cmd_power_sim(a: PowerSimArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let text = read_text(&a.sweep)?;
    let is_toml = a.sweep.extension().is_some_and(|e| e == "toml");
    let config = SweepConfig::parse(&text, is_toml)?;
    let (report, timing) = run_sweep(&config, a.seed, a.workers.max(1))?;
    ctx.emit(
        a.out.as_deref(),
        "power-sim.csv",
        &report.to_csv(Some(&timing)),
    )?;
    if let Some(path) = &a.machine_out {
        let mut json = report.to_json();
        json.push('\n');
        ctx.emit(Some(path), "power-sim.json", &json)?;
    }
    Ok(())
}

fn cmd_split_sd(a: SplitSdArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let summary = simulate_split_sd_with(a.p, a.n, a.k, a.trials, a.seed, a.workers.max(1))?;
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serialises");
    s.push('\n');
    ctx.print(&s)
}

fn cmd_report(a: ReportArgs, ctx: &mut Ctx<'_>) -> Result<()> {
    let report = AuditReport::from_json(&read_text(&a.input)?)?;
    let format: ReportFormat = a.format.into();
    let name = format!("report.{}", report_extension(format));
    ctx.emit(a.out.as_deref(), &name, &render_report(&report, format))
}
