use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const SMALL: &str = r#"{
  "benchmark": { "num_classes": 12, "superclasses": 3, "max_count": 300, "test_per_class": 10,
                 "aux_pool": 3, "samples_per_aux": 30 },
  "run": { "epochs": 3, "expand": "all", "lambda_s": 0.5 }
}"#;

fn tailext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailext"))
        .args(args)
        .current_dir(dir)
        .env_remove("TAILEXT_LLM_URL")
        .env_remove("TAILEXT_LLM_KEY")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = tailext(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.json"), SMALL).unwrap();
    tmp
}

fn synth_run_config(dir: &Path, out: &str, extra: &[&str]) -> Value {
    ok(dir, &[extra, &["--out", out, "synth"]].concat());
    read(dir.join(out).join("manifest.json"))["config"][1].clone()
}

#[test]
fn flag_beats_file_beats_default() {
    let tmp = workspace();
    let d = tmp.path();
    let default = synth_run_config(d, "a", &["--seed", "1"]);
    let file = synth_run_config(d, "b", &["--seed", "1", "--config", "small.json"]);
    let flag = synth_run_config(d, "c", &["--seed", "1", "--config", "small.json", "--lambda-s", "0.2"]);
    assert_eq!(default["lambda_s"], json!(0.1));
    assert_eq!(file["lambda_s"], json!(0.5));
    assert_eq!(flag["lambda_s"], json!(0.2));
    // untouched file values survive a flag override
    assert_eq!(flag["epochs"], json!(3));
    assert_eq!(default["epochs"], json!(30));
}

#[test]
fn manifest_records_command_seed_and_version() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["--config", "small.json", "--seed", "4", "--out", "data", "synth"]);
    let m = read(d.join("data/manifest.json"));
    assert_eq!(m["tool"], "tailext");
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 4);
    assert!(m["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    for f in ["train.jsonl", "test.jsonl", "aux.jsonl", "space.json", "target_counts.json"] {
        assert!(d.join("data").join(f).exists(), "missing {f}");
    }
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = workspace();
    let d = tmp.path();
    ok(d, &["--config", "small.json", "--out", "data", "synth"]);
    ok(
        d,
        &[
            "--config", "small.json", "--out", "model", "train", "--train", "data/train.jsonl", "--aux",
            "data/aux.jsonl", "--space", "data/space.json",
        ],
    );
    let m = read(d.join("model/manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);

    ok(d, &["--out", "masked", "eval", "--checkpoint", "model/checkpoint.json", "--test", "data/test.jsonl"]);
    ok(
        d,
        &["--no-mask-aux", "--out", "full", "eval", "--checkpoint", "model/checkpoint.json", "--test", "data/test.jsonl"],
    );
    let masked = read(d.join("masked/report.json"));
    let full = read(d.join("full/report.json"));
    assert_eq!(masked["masked"], json!(true));
    assert_eq!(masked["num_output_classes"], json!(12));
    assert_eq!(full["masked"], json!(false));
    assert!(full["num_output_classes"].as_u64().unwrap() > 12);

    let out = ok(d, &["report", "masked", "full"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
}

#[test]
fn exit_codes() {
    let tmp = workspace();
    let d = tmp.path();
    // configuration problems
    std::fs::write(d.join("bad.json"), r#"{ "run": { "no_such_field": 1 } }"#).unwrap();
    assert_eq!(tailext(d, &["--config", "bad.json", "synth"]).status.code(), Some(2));
    assert_eq!(tailext(d, &["--lambda-s", "-1", "synth"]).status.code(), Some(2));
    assert_eq!(tailext(d, &["--ratio", "1:x:3", "synth"]).status.code(), Some(2));
    assert_eq!(tailext(d, &["--gamma1", "0.9", "--gamma2", "0.5", "synth"]).status.code(), Some(2));
    assert_eq!(tailext(d, &["train", "--train", "x.jsonl"]).status.code(), Some(2));
    // data problems
    assert_eq!(tailext(d, &["--out", "m", "train", "--train", "missing.jsonl"]).status.code(), Some(3));
    std::fs::write(d.join("broken.jsonl"), "{not json\n").unwrap();
    assert_eq!(tailext(d, &["--out", "m", "train", "--train", "broken.jsonl"]).status.code(), Some(3));
}

#[test]
fn unreachable_llm_service_exits_with_four() {
    let tmp = workspace();
    let d = tmp.path();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/curation");
    let arg = |f: &str| fixtures.join(f).to_string_lossy().into_owned();
    let out = Command::new(env!("CARGO_BIN_EXE_tailext"))
        .args(["--out", "aux", "curate", "--train", &arg("targets.jsonl"), "--names", &arg("target_names.json")])
        .args(["--corpus", &arg("corpus.jsonl")])
        .current_dir(d)
        .env("TAILEXT_LLM_URL", "http://127.0.0.1:9/v1/chat/completions")
        .env("TAILEXT_LLM_KEY", "test")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn curate_from_fixture() {
    let tmp = workspace();
    let d = tmp.path();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/curation");
    let arg = |f: &str| fixtures.join(f).to_string_lossy().into_owned();
    ok(
        d,
        &[
            "--llm-fixture", &arg("llm"), "--out", "aux", "curate", "--train", &arg("targets.jsonl"), "--names",
            &arg("target_names.json"), "--corpus", &arg("corpus.jsonl"),
        ],
    );
    let aux = std::fs::read_to_string(d.join("aux/aux.jsonl")).unwrap();
    assert_eq!(aux.lines().count(), 46);
    let m = read(d.join("aux/manifest.json"));
    assert_eq!(m["command"], "curate");
}

#[test]
fn sweep_writes_one_row_per_value_and_repetition() {
    let tmp = workspace();
    let d = tmp.path();
    std::fs::write(
        d.join("sweep.json"),
        r#"{ "benchmark": { "num_classes": 12, "superclasses": 3, "max_count": 300, "test_per_class": 10,
                            "aux_pool": 3, "samples_per_aux": 30 },
             "benchmark_run": { "epochs": 2, "hidden": null } }"#,
    )
    .unwrap();
    ok(
        d,
        &["--config", "sweep.json", "--out", "s", "sweep", "--axis", "lambda_s", "--values", "0.1,1", "--repetitions", "2"],
    );
    let csv = std::fs::read_to_string(d.join("s/sweep.csv")).unwrap();
    // header, then baseline plus two values for each repetition
    assert_eq!(csv.lines().count(), 1 + 3 * 2, "{csv}");
    assert_eq!(read(d.join("s/manifest.json"))["config"]["run"]["epochs"], json!(2));
}
