//! End-to-end runs of the binary: outputs, exit codes and file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn detforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detforge")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn reference(file: &str) -> (f64, f64) {
    let refs = json(&fixture("reference.json"));
    let r = refs.as_array().unwrap().iter().find(|r| r["file"] == file).unwrap();
    (r["e_hf"].as_f64().unwrap(), r["e_fci"].as_f64().unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fci_writes_energy_wavefunction_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fci.json");
    let wf = dir.path().join("wf.csv");
    let o = detforge(&["fci", "--fcidump", s(&fixture("h2_sto3g.fcidump")), "--out", s(&out), "--wavefunction", s(&wf)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, e_fci) = reference("h2_sto3g.fcidump");
    let r = json(&out);
    assert!((r["energy"].as_f64().unwrap() - e_fci).abs() < 1e-8);
    assert_eq!(r["dimension"], 4);
    let text = std::fs::read_to_string(&wf).unwrap();
    assert!(text.starts_with("bitstring,coefficient\n01|01,"), "{text}");
    assert_eq!(json(&wf.with_extension("json"))["norb"], 2);
    assert_eq!(json(&dir.path().join("fci.meta.json"))["command"], "fci");
}

#[test]
fn pipeline_with_zero_parameters_reduces_to_hartree_fock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"workflow": "pipeline", "fcidump": "{}", "sqd": {{"n_samples": 50, "flip_prob": 0.0}},
                "truncate": {{"weights": [1.0]}}, "afqmc": {{"n_walkers": 8, "n_blocks": 20}}}}"#,
            s(&fixture("h4_sto3g.fcidump"))
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = detforge(&["pipeline", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("report.json"));
    let (e_hf, _) = reference("h4_sto3g.fcidump");
    assert_eq!(r["sqd"]["dimension"], 1);
    assert!((r["sqd"]["energy"].as_f64().unwrap() - e_hf).abs() < 1e-10);
    assert_eq!(r["trials"].as_array().unwrap().len(), 1);
    assert!(r["extrapolation"].is_null());
    let series = std::fs::read_to_string(out.join("afqmc_trial0.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("block,energy_re,energy_im,total_weight"));
    assert_eq!(series.lines().count(), 21);
    assert!(out.join("metadata.json").exists());
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"afqmc": {"n_walker": 10}}"#).unwrap();
    let o = detforge(&["afqmc", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_walker"));
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let missing = dir.path().join("missing.fcidump");
    assert_eq!(detforge(&["fci", "--fcidump", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    let junk = dir.path().join("junk.fcidump");
    std::fs::write(&junk, "not an fcidump").unwrap();
    assert_eq!(detforge(&["fci", "--fcidump", s(&junk), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(detforge(&["fci", "--out", s(&out)]).status.code(), Some(2));
    let h2 = fixture("h2_sto3g.fcidump");
    let o = detforge(&["hci", "--fcidump", s(&h2), "--epsilon1", "-1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn three_point_extrapolation() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "variance,energy,stderr\n1e-5,-107.640,0.001\n2e-5,-107.630,0.001\n3e-5,-107.620,0.001\n").unwrap();
    let out = dir.path().join("fit.json");
    let o = detforge(&["extrapolate", "--points", s(&pts), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert!((r["intercept"].as_f64().unwrap() + 107.65).abs() < 1e-9);
    assert!((r["slope"].as_f64().unwrap() - 1000.0).abs() < 1e-6);
    assert_eq!(r["weighted"], true);
    assert!(r["intercept_stderr"].as_f64().unwrap() > 0.0);

    std::fs::write(&pts, "variance,energy\n1e-5,-1.0\n1e-5,-1.1\n").unwrap();
    assert_eq!(detforge(&["extrapolate", "--points", s(&pts), "--out", s(&out)]).status.code(), Some(3));
}

#[test]
fn samples_feed_back_as_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch.csv");
    let h4 = fixture("h4_sto3g.fcidump");
    let o = detforge(&["lucj-sample", "--fcidump", s(&h4), "--random-params", "--shots", "500", "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bitstring,count"));
    let total: u64 = lines
        .map(|l| {
            let (bits, count) = l.split_once(',').unwrap();
            assert_eq!(bits.len(), 9);
            count.parse::<u64>().unwrap()
        })
        .sum();
    assert_eq!(total, 500);
}

#[test]
fn afqmc_reads_a_trial_written_by_hci() {
    let dir = tempfile::tempdir().unwrap();
    let h4 = fixture("h4_sto3g.fcidump");
    let wf = dir.path().join("hci_wf.csv");
    let o = detforge(&["hci", "--fcidump", s(&h4), "--epsilon1", "1e-12", "--out", s(&dir.path().join("hci.json")), "--wavefunction", s(&wf)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = dir.path().join("series.csv");
    let o = detforge(&["afqmc", "--fcidump", s(&h4), "--trial", s(&wf), "--walkers", "16", "--blocks", "20", "--out", s(&series)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, e_fci) = reference("h4_sto3g.fcidump");
    let summary = json(&series.with_extension("json"));
    assert!((summary["mean"].as_f64().unwrap() - e_fci).abs() < 1e-8);
    assert_eq!(summary["truncated"], 0);
}
