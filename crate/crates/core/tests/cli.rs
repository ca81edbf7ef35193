//! End-to-end runs of the `daa` binary.

use std::path::Path;
use std::process::{Command, Output};

fn daa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    let out = daa(&["synth", "--preset", "table-s2-main", "--n-cases", "60", "--n-controls", "40", "--seed", seed, "--out", path(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_cohort_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cohort");
    synth(&dir, "1");
    for f in ["counts.tsv", "labels.tsv", "log_abundance.tsv", "truth.json", "spec.json", "ground_truth.json", "manifest.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let counts = daa::ingest::parse_count_table(dir.join("counts.tsv")).unwrap();
    assert_eq!((counts.n_taxa(), counts.n_samples()), (47, 100));
    let labels = daa::ingest::parse_labels(dir.join("labels.tsv")).unwrap();
    assert_eq!(labels.len(), 100);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["tool"], "daa");
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["planted"], serde_json::json!([0, 10, 18, 26, 32, 44]));
}

#[test]
fn assoc_round_trips_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2");
    let out = tmp.path().join("assoc");
    let counts = data.join("counts.tsv");
    let labels = data.join("labels.tsv");
    let r = daa(&["assoc", "--counts", path(&counts), "--labels", path(&labels), "--permutations", "300", "--seed", "7", "--out", path(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = std::fs::read_to_string(out.join("assoc_daa.tsv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "taxon\th_case\th_ctrl\tdelta_h\tdelta_h_rel\tp\tq\tsignificant");
    assert_eq!(lines.count(), 47);
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let digest = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(std::fs::read(&counts).unwrap()))
    };
    assert!(manifest.contains(&digest));
}

#[test]
fn values_input_matches_simulated_log_abundances() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3");
    let out = tmp.path().join("fit");
    let r = daa(&["fit", "--values", path(&data.join("log_abundance.tsv")), "--out", path(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let model = daa::maxent::MaxEntModel::load(out.join("model.json")).unwrap();
    assert_eq!(model.dim(), 47);
    assert!(std::fs::read_to_string(out.join("spectrum.csv")).unwrap().starts_with("index,eigenvalue\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "4");
    let counts = data.join("counts.tsv");
    let labels = data.join("labels.tsv");
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let r = daa(&[
            "--threads", threads, "curve", "--counts", path(&counts), "--labels", path(&labels), "--method", "daa",
            "--sizes", "50,100", "--repeats", "3", "--permutations", "200", "--out", path(&out),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(run("a", "1"), run("b", "3"));
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(daa(&["--help"]).status.code(), Some(0));
    assert_eq!(daa(&["--version"]).status.code(), Some(0));
    assert_eq!(daa(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(daa(&["assoc", "--out", path(&out)]).status.code(), Some(2));
    assert_eq!(
        daa(&["assoc", "--counts", "x.tsv", "--labels", "y.tsv", "--fdr", "1.5", "--out", path(&out)]).status.code(),
        Some(2)
    );
    let missing = daa(&["assoc", "--counts", "/nonexistent/x.tsv", "--labels", "/nonexistent/y.tsv", "--out", path(&out)]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/"));
}

#[test]
fn malformed_counts_report_location() {
    let tmp = tempfile::tempdir().unwrap();
    let counts = tmp.path().join("c.tsv");
    let labels = tmp.path().join("l.tsv");
    std::fs::write(&counts, "taxon\ta\tb\nt1\t3\t-1\n").unwrap();
    std::fs::write(&labels, "a\tcase\nb\tcontrol\n").unwrap();
    let r = daa(&["fit", "--counts", path(&counts), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("c.tsv:2:3:"), "{err}");
}
