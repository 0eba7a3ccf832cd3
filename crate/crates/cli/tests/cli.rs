use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stegodna(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stegodna")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stegodna(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// A fast configuration: tiny corpus, a few epochs, two folds.
const TINY: &str = r#"{
  "corpus": {"kind": "synthetic", "markov_order": 1,
    "intron_transitions": [[0.1,0.7,0.1,0.1],[0.1,0.1,0.7,0.1],[0.1,0.1,0.1,0.7],[0.7,0.1,0.1,0.1]],
    "exon_transitions":   [[0.1,0.1,0.1,0.7],[0.7,0.1,0.1,0.1],[0.1,0.7,0.1,0.1],[0.1,0.1,0.7,0.1]],
    "seq_length": 200, "count_per_class": 6, "seed": 5},
  "detectors": ["rnn", "chisquare"],
  "rates": [0.0, 0.05],
  "lengths": [100, 200],
  "cases_per_cell": 4,
  "folds": 2,
  "window": 50,
  "max_train_windows": 24,
  "train": {"ae_epochs": 2, "clf_epochs": 3, "hidden_units": 4, "batch_size": 8, "learning_rate": 0.01}
}"#;

#[test]
fn golden_keybits_embed_and_extract() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cover.fasta"), ">c1\nACGGTTCCAATGC\n").unwrap();
    ok(dir.path(), &["embed", "--scheme", "keybits", "--key-length", "3", "--message", "L", "--in", "cover.fasta", "--out", "stego.fasta", "--positions", "pos.csv"]);
    let stego = fs::read_to_string(dir.path().join("stego.fasta")).unwrap();
    assert_eq!(stego, ">c1\nAATGCCCTGGTAACCGC\n");
    let positions = fs::read_to_string(dir.path().join("pos.csv")).unwrap();
    let mut lines = positions.lines();
    assert_eq!(lines.next(), Some("seq_id,position,original,replacement"));
    assert_eq!(lines.next(), Some("c1,1,C,A"));
    assert_eq!(positions.lines().last(), Some("c1,16,-,C"));
    let out = ok(dir.path(), &["extract", "--scheme", "keybits", "--key-length", "3", "--length", "1", "--in", "stego.fasta"]);
    assert_eq!(out, "c1\tL\n");
}

#[test]
fn every_scheme_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    // In frame, with plenty of fourfold-degenerate codons.
    let cover = "GCTGGTCCTACTGTTCTGTCTCGTGCAGGACCAACAGTACTCTCACGA".repeat(6);
    fs::write(dir.path().join("cover.fasta"), format!(">a\n{cover}\n>b\n{cover}\n")).unwrap();
    for (scheme, message) in [("keybits", "hi there"), ("ascii", "hi there"), ("fivebit", "HI THERE"), ("codon", "hi")] {
        ok(dir.path(), &["embed", "--scheme", scheme, "--key-length", "5", "--message", message, "--in", "cover.fasta", "--out", "s.fasta"]);
        let out = ok(dir.path(), &["extract", "--scheme", scheme, "--key-length", "5", "--message", message, "--in", "s.fasta"]);
        assert_eq!(out, format!("a\t{message}\nb\t{message}\n"), "{scheme}");
    }
}

#[test]
fn gen_is_deterministic_and_labeled() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["gen", "--length", "120", "--count", "3", "--seed", "9"]);
    let b = ok(dir.path(), &["gen", "--length", "120", "--count", "3", "--seed", "9"]);
    let c = ok(dir.path(), &["gen", "--length", "120", "--count", "3", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.matches("label=intron").count(), 3);
    assert_eq!(a.matches("label=exon").count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&stegodna(dir.path(), &["gen", "--bogus"])), 1);
    fs::write(dir.path().join("bad.json"), r#"{"folds": 1}"#).unwrap();
    assert_eq!(code(&stegodna(dir.path(), &["experiment", "--config", "bad.json", "--out", "x"])), 1);
    fs::write(dir.path().join("broken.json"), "{").unwrap();
    assert_eq!(code(&stegodna(dir.path(), &["experiment", "--config", "broken.json", "--out", "x"])), 1);
    assert_eq!(code(&stegodna(dir.path(), &["entropy", "--clean", "missing.fasta", "--stego", "missing.fasta"])), 2);
    fs::write(dir.path().join("short.fasta"), ">s\nACGTACGT\n").unwrap();
    let out = stegodna(dir.path(), &["embed", "--scheme", "keybits", "--message", "x", "--in", "short.fasta", "--key-length", "1"]);
    assert_eq!(code(&out), 0);
    let out = stegodna(dir.path(), &["extract", "--scheme", "keybits", "--key-length", "1", "--message", "y", "--in", "short.fasta"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_calibrate_detect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    ok(dir.path(), &["gen", "--config", "tiny.json", "--out", "corpus.fasta"]);
    for detector in ["rnn", "svm", "adaboost", "forest", "chisquare"] {
        let model = format!("{detector}.json");
        ok(dir.path(), &["train", "--config", "tiny.json", "--detector", detector, "--in", "corpus.fasta", "--out", &model]);
        ok(dir.path(), &["calibrate", "--config", "tiny.json", "--model", &model, "--in", "corpus.fasta", "--out", "cal.json"]);
        let cal: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cal.json")).unwrap()).unwrap();
        assert_eq!(cal["sample_count"], 12);
        assert_eq!(cal["label_context"], "mixed");
        let csv = ok(dir.path(), &["detect", "--config", "tiny.json", "--model", &model, "--calibration", "cal.json", "--in", "corpus.fasta"]);
        assert_eq!(csv.lines().next(), Some("seq_id,score,deviation,flagged"));
        assert_eq!(csv.lines().count(), 13, "{detector}");
    }
}

#[test]
fn experiment_report_and_idempotent_rerun() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    ok(dir.path(), &["experiment", "--config", "tiny.json", "--out", "run"]);
    let files = ["results.csv", "summary.json", "run_manifest.json"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join("run").join(f)).unwrap()).collect();
    ok(dir.path(), &["experiment", "--config", "tiny.json", "--out", "run"]);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(dir.path().join("run").join(f)).unwrap(), bytes, "{f}");
    }
    let report = ok(dir.path(), &["report", "--in", "run"]);
    assert!(report.starts_with("detector"));
    assert_eq!(report.lines().count(), 1 + 2 * 2);
    let csv = String::from_utf8(first[0].clone()).unwrap();
    // Two detectors × two lengths × two rates × two folds.
    assert_eq!(csv.lines().count(), 1 + 16);
}
