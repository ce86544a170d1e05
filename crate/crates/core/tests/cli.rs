//! End-to-end tests of the `pairmde` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn pairmde() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pairmde"));
    c.env_remove(pairmde::cli::OUT_DIR_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    pairmde().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    common::fixture_path(name).display().to_string()
}

#[test]
fn mde_headline_text_and_machine() {
    let o = run(&[
        "mde",
        "--m",
        "500",
        "--rho",
        "0.10",
        "--alpha",
        "0.05",
        "--power",
        "0.80",
        "--paper-compat",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("3.96 pp"), "{}", stdout(&o));
    let o = run(&[
        "mde",
        "--m",
        "500",
        "--rho",
        "0.10",
        "--paper-compat",
        "--format",
        "machine",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["mde"].as_f64().unwrap() - 0.039598).abs() < 5e-7);
}

#[test]
fn samplesize_table7() {
    let o = run(&[
        "samplesize",
        "--delta-pp",
        "1",
        "--rho",
        "0.05",
        "--paper-compat",
    ]);
    assert_eq!(stdout(&o).trim(), "3920");
    let o = run(&[
        "samplesize",
        "--delta-pp",
        "0.5,1,3,5",
        "--rho",
        "0.05,0.10,0.20",
        "--paper-compat",
        "--format",
        "machine",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let got: Vec<u64> = v["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["m"].as_u64().unwrap())
        .collect();
    let mut want: Vec<u64> = Vec::new();
    let t7 = common::table7();
    for rho in [0.05, 0.10, 0.20] {
        for d in [0.5, 1.0, 3.0, 5.0] {
            want.push(
                t7.cells
                    .iter()
                    .find(|c| c.rho_d == rho && c.delta_pp == d)
                    .unwrap()
                    .m,
            );
        }
    }
    assert_eq!(got, want);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["mde", "--m", "500"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["mde", "--m", "500", "--rho", "0.1", "--alpha", "1.5"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        run(&["mde", "--m", "3", "--rho", "0.1", "--implicit"])
            .status
            .code(),
        Some(6)
    );
    assert_eq!(
        run(&["audit", "--records", "/nonexistent.jsonl"])
            .status
            .code(),
        Some(5)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"schema\":\"paired-eval/1\"}\n{\"model\":\"m\",\"benchmark\":\"b\"}\n",
    )
    .unwrap();
    let o = run(&["audit", "--records", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn prereg_new_check_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.prereg");
    let p = path.to_str().unwrap();
    let o = run(&[
        "prereg",
        "new",
        "--estimand",
        "aggregate",
        "--k",
        "5",
        "--n",
        "100",
        "--rho-prior",
        "0.10",
        "--justification",
        "pilot",
        "--paired-retention",
        "--out",
        p,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = run(&["prereg", "check", "--prereg", p]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("m=500"));

    let text = std::fs::read_to_string(&path).unwrap();
    let edited: String = text
        .lines()
        .map(|l| {
            if l.starts_with("mde_pp:") {
                "mde_pp: 3.0000000000".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, edited + "\n").unwrap();
    assert_eq!(
        run(&["prereg", "check", "--prereg", p]).status.code(),
        Some(4)
    );

    std::fs::write(&path, text.replace("prereg/1", "prereg/9")).unwrap();
    assert_eq!(
        run(&["prereg", "check", "--prereg", p]).status.code(),
        Some(3)
    );
}

#[test]
fn prereg_revise_counts() {
    let pre = fixture("pilot.prereg");
    let o = run(&[
        "prereg", "revise", "--prereg", &pre, "--n10", "15", "--n01", "15", "--m", "500",
        "--format", "machine",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let out = &v["revisions"][0]["outcome"];
    assert_eq!(out["prior_violated"], false);
    assert_eq!(out["revised_mde"], v["prereg"]["computed_mde"]);
    let o = run(&[
        "prereg", "revise", "--prereg", &pre, "--n10", "30", "--n01", "30", "--m", "500",
        "--format", "machine",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["revisions"][0]["outcome"]["prior_violated"], true);
}

#[test]
fn audit_pilot_verdict() {
    let o = run(&[
        "audit",
        "--records",
        &fixture("pilot.jsonl"),
        "--prereg",
        &fixture("pilot.prereg"),
        "--format",
        "markdown",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let md = stdout(&o);
    let row = md
        .lines()
        .find(|l| l.starts_with("| OPT-2.7B | WinoGrande | 500 |"))
        .expect("verdict row");
    let cols: Vec<&str> = row.split('|').map(str::trim).collect();
    // | model | bench | m | |d| | mde@0.10 | exceeds@0.10 | mde@0.05 | exceeds@0.05 |
    assert_eq!(cols[4], "3.2");
    assert_eq!(cols[6], "no");
    assert_eq!(cols[8], "yes");
}

#[test]
fn audit_machine_report_renders_identically() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("audit.json");
    let md = dir.path().join("audit.md");
    let o = run(&[
        "audit",
        "--records",
        &fixture("pilot.jsonl"),
        "--prereg",
        &fixture("pilot.prereg"),
        "--format",
        "markdown",
        "--out",
        md.to_str().unwrap(),
        "--machine-out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&[
        "report",
        "--input",
        json.to_str().unwrap(),
        "--format",
        "markdown",
    ]);
    assert_eq!(o.stdout, std::fs::read(&md).unwrap());
    let report =
        pairmde::report::AuditReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 16);
    assert_eq!(report.metadata.inputs.len(), 2);
    assert_eq!(report.metadata.inputs[0].sha256.len(), 64);
}

#[test]
fn out_dir_env_sets_default_destination_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = pairmde()
        .env(pairmde::cli::OUT_DIR_ENV, dir.path())
        .args([
            "audit",
            "--records",
            &fixture("pilot.jsonl"),
            "--format",
            "markdown",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("audit.md").exists());

    let explicit = dir.path().join("elsewhere.md");
    pairmde()
        .env(pairmde::cli::OUT_DIR_ENV, dir.path())
        .args([
            "audit",
            "--records",
            &fixture("pilot.jsonl"),
            "--format",
            "markdown",
            "--out",
        ])
        .arg(&explicit)
        .output()
        .unwrap();
    assert!(explicit.exists());
}

#[test]
fn config_file_supplies_flags_and_cli_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pairmde.toml");
    std::fs::write(
        &cfg,
        "[mde]\nm = 100\nrho = 0.10\npaper_compat = true\nformat = \"machine\"\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let o = run(&["--config", c, "mde"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["mde"].as_f64().unwrap() - 0.0885).abs() < 1e-4);
    let o = run(&["mde", "--m", "500", "--config", c]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m"], 500);

    std::fs::write(&cfg, "[mde]\nbogus = 1\n").unwrap();
    assert_eq!(
        run(&["--config", c, "mde", "--m", "5", "--rho", "0.1"])
            .status
            .code(),
        Some(2)
    );
}

fn sweep_file(dir: &Path, with_seed: bool) -> String {
    let seed = if with_seed { "\"seed\": 42," } else { "" };
    let text = format!(
        r#"{{ {seed} "entries": [
            {{"m": 200, "rho_d": 0.1, "delta": 0.0, "trials": 4000, "test_variant": "z-null-variance"}},
            {{"m": 200, "rho_d": 0.1, "delta": {{"at_mde": "exact-quantile"}}, "trials": 4000, "test_variant": "mcnemar-mid-p"}}
        ] }}"#
    );
    let path = dir.join(if with_seed {
        "sweep.json"
    } else {
        "noseed.json"
    });
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn power_sim_requires_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let noseed = sweep_file(dir.path(), false);
    assert_eq!(
        run(&["power-sim", "--sweep", &noseed]).status.code(),
        Some(4)
    );

    let sweep = sweep_file(dir.path(), true);
    let mut reports = Vec::new();
    for workers in ["1", "2"] {
        let machine = dir.path().join(format!("m{workers}.json"));
        let csv = dir.path().join(format!("t{workers}.csv"));
        let o = run(&[
            "power-sim",
            "--sweep",
            &sweep,
            "--workers",
            workers,
            "--out",
            csv.to_str().unwrap(),
            "--machine-out",
            machine.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
        reports.push(std::fs::read(&machine).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn wilson_command() {
    let o = run(&[
        "wilson",
        "--successes",
        "30",
        "--n",
        "500",
        "--upper",
        "--format",
        "machine",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["upper"].as_f64().unwrap() - 0.0799507415456224).abs() < 1e-12);
    let o = run(&["wilson", "--successes", "126", "--n", "500"]);
    assert!(stdout(&o).contains("[0.2159, 0.2918]"), "{}", stdout(&o));
}
