use std::fs;
use std::path::Path;

use docstage::pipeline::{self, PipelineConfig, PipelineError};
use docstage::predictor::PredictorError;

fn small(extra: &str) -> PipelineConfig {
    let text = format!(
        "[simulate]\ndoc_count = 80\nseed = 4\n[train]\ntree_count = 4\nmin_leaf = 5\n[evaluate]\niterations = 50\n{extra}"
    );
    PipelineConfig::from_toml_str(&text, Path::new("."), "inline").unwrap()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    let sim = pipeline::simulate(&cfg, dir.path()).unwrap();
    assert_eq!(sim.documents, 80);
    let a = pipeline::analyze(&cfg, dir.path()).unwrap();
    assert!(a.documents > 0 && a.documents <= 80);
    let m = pipeline::featurize(&cfg, dir.path()).unwrap();
    assert_eq!(m.train_rows, m.train_documents * 5);
    assert_eq!(m.train_documents + m.test_documents, a.documents);
    pipeline::train(&cfg, dir.path()).unwrap();
    let r = pipeline::evaluate(&cfg, dir.path()).unwrap();
    assert_eq!(r.test_examples, m.test_rows);
    let header = fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
    assert_eq!(header.lines().count(), 1 + 2 * 16);
}

#[test]
fn per_document_average_mode_is_selectable() {
    let dir = tempfile::tempdir().unwrap();
    let pooled = small("");
    let avg = small("[analyze]\ncat_mode = \"per_document_average\"\n");
    pipeline::simulate(&pooled, dir.path()).unwrap();
    let a = pipeline::analyze(&pooled, dir.path()).unwrap();
    let b = pipeline::analyze(&avg, dir.path()).unwrap();
    assert_ne!(a.cat.buckets, b.cat.buckets);
    assert!((b.cat.buckets.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn schema_mismatch_is_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    pipeline::simulate(&cfg, dir.path()).unwrap();
    pipeline::featurize(&cfg, dir.path()).unwrap();
    let train = dir.path().join("dataset/train.csv");
    let text = fs::read_to_string(&train).unwrap().replacen("cmd:", "cmd_renamed:", 1);
    fs::write(&train, text).unwrap();
    match pipeline::train(&cfg, dir.path()) {
        Err(PipelineError::Input { path, .. }) => assert!(path.ends_with("train.csv"), "{path}"),
        other => panic!("expected input error, got {other:?}"),
    }
}

#[test]
fn model_from_another_layout_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("");
    pipeline::simulate(&cfg, dir.path()).unwrap();
    pipeline::featurize(&cfg, dir.path()).unwrap();
    pipeline::train(&cfg, dir.path()).unwrap();
    // Re-featurize with a reduced advanced-feature mapping: the layout changes.
    let adv = dir.path().join("adv.tsv");
    fs::write(&adv, "group\tcommand\nOnlyTables\tTableInsert\n").unwrap();
    let text =
        format!("[simulate]\ndoc_count = 80\nseed = 4\n[paths]\nadvanced_features = {:?}\n", adv.display().to_string());
    let other = PipelineConfig::from_toml_str(&text, Path::new("."), "inline").unwrap();
    pipeline::featurize(&other, dir.path()).unwrap();
    match pipeline::evaluate(&cfg, dir.path()) {
        Err(PipelineError::Predictor(PredictorError::LayoutMismatch { .. })) => {}
        other => panic!("expected layout mismatch, got {other:?}"),
    }
}

#[test]
fn empty_corpus_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.jsonl"), "").unwrap();
    let cfg = small("");
    assert!(pipeline::featurize(&cfg, dir.path()).is_err());
}
