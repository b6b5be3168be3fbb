use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn docstage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docstage")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

const SMALL: &str = "
[simulate]
doc_count = 120
seed = 5

[features]
seed = 3

[train]
tree_count = 8
min_leaf = 5
seed = 2

[evaluate]
iterations = 300
seed = 9
";

#[test]
fn unknown_config_key_fails_with_key_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    for (text, key) in
        [("[train]\ntree_cuont = 4\n", "tree_cuont"), ("[simulate]\nsead = 1\n", "sead"), ("colour = 1\n", "colour")]
    {
        fs::write(&cfg, text).unwrap();
        let out = docstage(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        let err = stderr(&out);
        assert!(err.contains(key) && err.contains("kind=config"), "{err}");
    }
    assert!(!dir.path().join("corpus.jsonl").exists());
}

#[test]
fn analyze_two_ended_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let hour = 3_600_000u64;
    let mut lines: Vec<String> = (0..4)
        .map(|i| {
            format!(
                r#"{{"kind":"event","doc":"d1","author":"{}","ts":{},"cmd":"Typing"}}"#,
                ["a", "b"][i % 2],
                i * 1000
            )
        })
        .collect();
    lines.push(format!(r#"{{"kind":"event","doc":"d1","author":"a","ts":{},"cmd":"Save"}}"#, 10 * hour));
    lines.push("not json".into());
    fs::write(dir.path().join("fixture.jsonl"), lines.join("\n") + "\n").unwrap();
    fs::write(dir.path().join("c.toml"), "[paths]\ncorpus = \"fixture.jsonl\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = docstage(&[
        "analyze",
        "--config",
        dir.path().join("c.toml").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    ok(&out);
    let cat = fs::read_to_string(out_dir.join("cat.csv")).unwrap();
    let shares: Vec<&str> = cat.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(shares, ["0", "0.8", "0", "0", "0", "0", "0", "0", "0", "0", "0.2", "0"]);
    let analytics: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("analytics.json")).unwrap()).unwrap();
    assert_eq!(analytics["malformed_lines"], 1);
    assert_eq!(analytics["documents"], 1);
    assert!(stderr(&out).contains("line 6"));
}

#[test]
fn missing_inputs_fail_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = docstage(&["train", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("kind=io") && err.contains("features.json"), "{err}");
    let out = docstage(&["repro", "--config", "/nonexistent/c.toml", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/c.toml"));
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = docstage(&["simulate", "--threads", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stages_are_idempotent_and_match_repro() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();
    let staged = dir.path().join("staged");
    for cmd in ["simulate", "analyze", "featurize", "train", "evaluate"] {
        ok(&docstage(&[cmd, "--config", cfg, "--out", staged.to_str().unwrap()]));
    }
    // A second pass over existing outputs rewrites the same bytes.
    let first = snapshot(&staged);
    for cmd in ["simulate", "analyze", "featurize", "train", "evaluate"] {
        ok(&docstage(&[cmd, "--config", cfg, "--out", staged.to_str().unwrap()]));
    }
    assert_eq!(snapshot(&staged), first);

    let chained = dir.path().join("chained");
    let out = docstage(&["repro", "--config", cfg, "--threads", "1", "--out", chained.to_str().unwrap()]);
    ok(&out);
    let mut repro = snapshot(&chained);
    let summary = repro.remove("summary.txt").expect("summary written");
    assert_eq!(repro, first);
    assert_eq!(out.stdout, summary);
    let text = String::from_utf8(summary).unwrap();
    for key in ["model_accuracy:", "baseline_accuracy:", "delta:", "p_value:"] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{text}");
    }
}
