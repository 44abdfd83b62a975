use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexpredict"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const TINY: &str = r#"{"id":"a","spoken":"cat","masker":"SSN","m":4,"responses":[{"word":"cat","count":3},{"word":"cap","count":1}]}
{"id":"b","spoken":"dog","masker":"BAB4","m":4,"responses":[{"word":"dog","count":2},{"word":"cat","count":2}]}
"#;

fn tiny(dir: &Path) {
    fs::write(dir.join("corpus.jsonl"), TINY).unwrap();
}

fn synth_and_split(dir: &Path, trials: &str) {
    ok(dir, &["synth", "--trials", trials, "--seed", "5"]);
    ok(dir, &["split", "--corpus", "corpus.jsonl", "--seed", "5"]);
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["synth", "--trials", "40", "--seed", "9"]);
    }
    for f in ["corpus.jsonl", "ground_truth.jsonl", "synth.manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.path().join("synth.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["timestamp"], "2023-11-14T22:13:20Z");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["outputs"]["corpus.jsonl"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn split_defaults_and_bad_fractions() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--trials", "30"]);
    let stdout = ok(dir.path(), &["split", "--corpus", "corpus.jsonl"]);
    assert!(stdout.contains("train"), "{stdout}");
    let lines = jsonl(&dir.path().join("split.jsonl"));
    assert_eq!(lines.len(), 30);
    let out = run(dir.path(), &["split", "--corpus", "corpus.jsonl", "--train", "0.7"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fractions"));
}

#[test]
fn random_baseline_has_constant_logprob() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    ok(dir.path(), &["baseline", "--kind", "random", "--vocab-size", "1000", "--corpus", "corpus.jsonl"]);
    for set in jsonl(&dir.path().join("predictions-random.jsonl")) {
        for c in set["candidates"].as_array().unwrap() {
            assert!((c["logprob"].as_f64().unwrap() - (1.0f64 / 1000.0).ln()).abs() < 1e-15);
        }
    }
    let report = ok(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "predictions-random.jsonl"]);
    assert!(report.contains("random"));
    let json: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    // ln C(4,3) + 4 ln(1/1000) and ln C(4,2) + 4 ln(1/1000), averaged.
    let expected = ((4f64).ln() + (6f64).ln()) / 2.0 + 4.0 * (1e-3f64).ln();
    assert!((json["overall"]["avg_log_likelihood"].as_f64().unwrap() - expected).abs() < 1e-9);
}

#[test]
fn multinomial_and_oracle_baselines() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    ok(dir.path(), &["baseline", "--kind", "multinomial", "--corpus", "corpus.jsonl"]);
    let sets = jsonl(&dir.path().join("predictions-multinomial.jsonl"));
    // Pooled counts cat 5, cap 1, dog 2; add-one over 3 words: 6/11, 2/11, 3/11.
    let probs: Vec<(String, f64)> = sets[0]["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["surface"].as_str().unwrap().to_string(), c["logprob"].as_f64().unwrap().exp()))
        .collect();
    let expect = [("cap", 2.0 / 11.0), ("cat", 6.0 / 11.0), ("dog", 3.0 / 11.0)];
    for (w, p) in expect {
        let got = probs.iter().find(|(s, _)| s == w).unwrap().1;
        assert!((got - p).abs() < 1e-12, "{w}: {got}");
    }

    ok(dir.path(), &["baseline", "--kind", "oracle", "--corpus", "corpus.jsonl"]);
    let sets = jsonl(&dir.path().join("predictions-oracle.jsonl"));
    let first: Vec<f64> =
        sets[0]["candidates"].as_array().unwrap().iter().map(|c| c["logprob"].as_f64().unwrap().exp()).collect();
    assert!((first[0] - 0.75).abs() < 1e-15 && (first[1] - 0.25).abs() < 1e-15);
}

#[test]
fn evaluate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    fs::write(
        dir.path().join("partial.jsonl"),
        r#"{"trial_id":"a","model":"m","renormalized":false,"candidates":[{"surface":"cat","logprob":-0.3}]}
"#,
    )
    .unwrap();
    let out = run(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "partial.jsonl"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains('b'));

    let out = run(
        dir.path(),
        &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "partial.jsonl", "--partition", "test"],
    );
    assert_eq!(code(&out), 2);

    fs::write(
        dir.path().join("split.jsonl"),
        "{\"id\":\"a\",\"partition\":\"train\"}\n{\"id\":\"b\",\"partition\":\"train\"}\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.jsonl",
            "--partition",
            "test",
            "--predictions",
            "partial.jsonl",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trials"));

    let out =
        run(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "partial.jsonl", "--floor", "0.5"]);
    assert_eq!(code(&out), 2);

    fs::write(dir.path().join("broken.jsonl"), "{\"id\":\"x\"\n").unwrap();
    let out = run(dir.path(), &["evaluate", "--corpus", "broken.jsonl", "--predictions", "partial.jsonl"]);
    assert_eq!(code(&out), 3);
    let out = run(dir.path(), &["evaluate", "--corpus", "corpus.jsonl"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn lexicon_changes_matching() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("corpus.jsonl"),
        r#"{"id":"a","spoken":"there","masker":"SSN","m":3,"responses":[{"word":"their","count":3}]}
"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("preds.jsonl"),
        r#"{"trial_id":"a","model":"m","renormalized":false,"candidates":[{"surface":"there","logprob":-0.1},{"surface":"their","logprob":-3.0}]}
"#,
    )
    .unwrap();
    fs::write(dir.path().join("lex.dict"), "there DH EH1 R\ntheir DH EH1 R\n").unwrap();
    ok(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "preds.jsonl", "--out-dir", "plain"]);
    ok(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            "corpus.jsonl",
            "--predictions",
            "preds.jsonl",
            "--lexicon",
            "lex.dict",
            "--out-dir",
            "lex",
        ],
    );
    let read = |d: &str| -> Value {
        serde_json::from_slice(&fs::read(dir.path().join(d).join("report.json")).unwrap()).unwrap()
    };
    assert_eq!(read("plain")["overall"]["top1_accuracy"], 0.0);
    assert_eq!(read("lex")["overall"]["top1_accuracy"], 1.0);
    assert_eq!(read("lex")["metadata"]["lexicon"], true);
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.path().join("lex/evaluate.manifest.json")).unwrap()).unwrap();
    assert!(manifest["inputs"]["lexicon"]["sha256"].is_string());
}

#[test]
fn validate_predictions_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    ok(dir.path(), &["baseline", "--kind", "oracle", "--corpus", "corpus.jsonl"]);
    let stdout = ok(
        dir.path(),
        &["validate-predictions", "--predictions", "predictions-oracle.jsonl", "--corpus", "corpus.jsonl"],
    );
    assert!(stdout.starts_with("ok: 2"));

    fs::write(
        dir.path().join("bad.jsonl"),
        r#"{"trial_id":"a","model":"m","renormalized":false,"candidates":[{"surface":"cat","logprob":0.5},{"surface":"cap","logprob":-1.0,"token_logprobs":[-0.5,-0.499]}]}
"#,
    )
    .unwrap();
    let out = run(dir.path(), &["validate-predictions", "--predictions", "bad.jsonl", "--corpus", "corpus.jsonl"]);
    assert_eq!(code(&out), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("logprob > 0"), "{stdout}");
    assert!(stdout.contains("token/word inconsistency"), "{stdout}");
    assert!(stdout.contains("b: no prediction set"), "{stdout}");
    let out = run(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--predictions", "bad.jsonl"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn train_toy_emits_params_and_history() {
    let dir = tempfile::tempdir().unwrap();
    synth_and_split(dir.path(), "80");
    ok(
        dir.path(),
        &[
            "train-toy",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.jsonl",
            "--lr",
            "0.05",
            "--epochs",
            "3",
            "--out-dir",
            "toy",
        ],
    );
    let params: Value = serde_json::from_slice(&fs::read(dir.path().join("toy/params.json")).unwrap()).unwrap();
    assert!(params["W"].is_array() && params["b"].is_array() && params["vocab"].is_array());
    let history: Value = serde_json::from_slice(&fs::read(dir.path().join("toy/history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 3);
    let report = ok(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.jsonl",
            "--partition",
            "test",
            "--params",
            "toy/params.json",
            "--out-dir",
            "toy",
        ],
    );
    assert!(report.contains("toy"));

    let out = run(dir.path(), &["train-toy", "--corpus", "corpus.jsonl", "--out-dir", "nosplit"]);
    assert_eq!(code(&out), 2);
    let out = run(dir.path(), &["train-toy", "--corpus", "corpus.jsonl", "--split", "split.jsonl", "--warmup", "1.5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    synth_and_split(dir.path(), "60");
    fs::write(dir.path().join("cfg.json"), r#"{"peak_lr": 0.02, "epochs": 2, "seed": 4, "schedule": "linear"}"#)
        .unwrap();
    ok(
        dir.path(),
        &[
            "train-toy",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.jsonl",
            "--config",
            "cfg.json",
            "--epochs",
            "3",
            "--out-dir",
            "t",
        ],
    );
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.path().join("t/train-toy.manifest.json")).unwrap()).unwrap();
    let resolved = &manifest["config"]["resolved"];
    assert_eq!(resolved["peak_lr"], 0.02);
    assert_eq!(resolved["epochs"], 3);
    assert_eq!(resolved["schedule"], "linear");
    assert_eq!(resolved["seed"], 4);
    assert_eq!(manifest["seed"], 4);

    fs::write(dir.path().join("bad.json"), r#"{"peak_lr": "fast"}"#).unwrap();
    let out =
        run(dir.path(), &["train-toy", "--corpus", "corpus.jsonl", "--split", "split.jsonl", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn grid_of_one_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    synth_and_split(dir.path(), "60");
    let table = ok(
        dir.path(),
        &[
            "grid",
            "--corpus",
            "corpus.jsonl",
            "--split",
            "split.jsonl",
            "--lrs",
            "0.01",
            "--warmups",
            "0.1",
            "--schedules",
            "cosine",
            "--epoch-grid",
            "2",
        ],
    );
    let grid: Value = serde_json::from_slice(&fs::read(dir.path().join("grid.json")).unwrap()).unwrap();
    assert_eq!(grid["results"].as_array().unwrap().len(), 1);
    assert_eq!(grid["best"], 0);
    assert_eq!(fs::read_to_string(dir.path().join("grid.txt")).unwrap().lines().count(), 2);
    assert!(table.contains("0*"));
    assert!(dir.path().join("params.json").exists());
}

#[test]
fn overflowing_parameters_exit_with_numerics_code() {
    let dir = tempfile::tempdir().unwrap();
    synth_and_split(dir.path(), "40");
    ok(
        dir.path(),
        &["train-toy", "--corpus", "corpus.jsonl", "--split", "split.jsonl", "--epochs", "1", "--out-dir", "toy"],
    );
    let mut params: Value = serde_json::from_slice(&fs::read(dir.path().join("toy/params.json")).unwrap()).unwrap();
    // Finite on disk, but weight + bias overflow for every one-hot feature.
    let v = params["b"].as_array().unwrap().len();
    params["b"][0] = Value::from(1.5e308);
    let w = params["W"].as_array_mut().unwrap();
    for row in 0..w.len() / v {
        w[row * v] = Value::from(1.5e308);
    }
    fs::write(dir.path().join("huge.json"), serde_json::to_vec(&params).unwrap()).unwrap();
    let out = run(dir.path(), &["evaluate", "--corpus", "corpus.jsonl", "--params", "huge.json"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}
