use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tonewood::dataset::{split_indices, DatasetConfig, DatasetMeta, Sample, SampleSet, FORMAT_VERSION};
use tonewood::geometry::{perturb, Families, ReferencePlate};
use tonewood::oracle::MODE_COUNT;
use tonewood::surrogate::{SurrogateModel, TrainConfig};

fn tonewood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonewood")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn one_line_error(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn synthetic_set(n: usize, noise: bool) -> SampleSet {
    let base = ReferencePlate::violin().params();
    let samples = (0..n)
        .map(|i| {
            let params = perturb(&base, Families::ALL, 0.05, i as u64).unwrap();
            let v = params.to_vector();
            let s = v[..28].iter().sum::<f64>() / 28.0;
            let freqs_hz = (1..=MODE_COUNT)
                .map(|k| {
                    let jitter = if noise { ((i * 7919 + k * 104729) % 1000) as f64 } else { 5.0 * (v[k] - 1.0) };
                    100.0 * k as f64 * s + jitter
                })
                .collect();
            Sample { index: i, params, freqs_hz }
        })
        .collect();
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        config: DatasetConfig { n, ..Default::default() },
        component_redraws: 0,
        geometry_rejections: 0,
        oracle_failures: 0,
        split: split_indices(n, 3),
    };
    SampleSet { meta, samples }
}

fn synthetic_model(path: &Path) {
    let set = synthetic_set(400, false);
    let model = SurrogateModel::train(&set, &TrainConfig { hidden: 6, max_epochs: 30, ..Default::default() }).unwrap();
    model.save(path).unwrap();
}

#[test]
fn dataset_generation_is_deterministic_and_flags_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"n": 100, "sigma": 0.05, "seed": 9}"#).unwrap();

    let first = stdout_json(&tonewood(&[
        "gen-dataset",
        "--n",
        "100",
        "--sigma",
        "0.05",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
    ]));
    assert_eq!(first["samples"], 100);
    assert_eq!(first["seed"], 7);
    let second = stdout_json(&tonewood(&[
        "gen-dataset",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]));
    assert_eq!(first["fingerprint"], second["fingerprint"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let again = tonewood(&["gen-dataset", "--n", "100", "--out", a.to_str().unwrap()]);
    assert!(one_line_error(&again).contains("OutputExists"));

    // A tiny network trained on the real labels runs the whole pipeline.
    let model = dir.path().join("model.json");
    let trained = tonewood(&[
        "train",
        "--dataset",
        a.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--hidden",
        "4",
        "--allow-ungated",
    ]);
    assert!(model.exists(), "{}", String::from_utf8_lossy(&trained.stderr));

    let predicted = stdout_json(&tonewood(&["predict", "--model", model.to_str().unwrap()]));
    assert_eq!(predicted["freqs_hz"].as_array().unwrap().len(), 10);

    let run = dir.path().join("run.json");
    let summary = stdout_json(&tonewood(&[
        "optimize",
        "--model",
        model.to_str().unwrap(),
        "--loss",
        "ratio",
        "--alpha",
        "2.0",
        "--allow-ungated",
        "--seed",
        "3",
        "--out",
        run.to_str().unwrap(),
    ]));
    assert_eq!(summary["seed"], 3);
    assert!(summary["evaluations"].as_u64().unwrap() <= 4000);
    let cv = stdout_json(&tonewood(&["cross-validate", "--run", run.to_str().unwrap()]));
    assert_eq!(cv["relative_errors"].as_array().unwrap().len(), 10);
}

#[test]
fn training_below_the_gate_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("noise.jsonl");
    synthetic_set(400, true).save(&data).unwrap();
    let model = dir.path().join("model.json");
    let out =
        tonewood(&["train", "--dataset", data.to_str().unwrap(), "--out", model.to_str().unwrap(), "--hidden", "4"]);
    let err = one_line_error(&out);
    assert!(err.contains("GateFailed"), "{err}");
    assert!(!model.exists());
}

#[test]
fn predict_prints_ten_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    synthetic_model(&model);
    let params = dir.path().join("params.json");
    std::fs::write(&params, serde_json::to_string(&ReferencePlate::violin().params()).unwrap()).unwrap();
    let out =
        stdout_json(&tonewood(&["predict", "--model", model.to_str().unwrap(), "--params", params.to_str().unwrap()]));
    let f: Vec<f64> = serde_json::from_value(out["freqs_hz"].clone()).unwrap();
    assert_eq!(f.len(), 10);
    assert_eq!(out["f52"].as_f64().unwrap(), f[4] / f[1]);
    assert_eq!(out["in_training_box"], true);
}

#[test]
fn usage_and_input_errors_are_single_lines() {
    let err = one_line_error(&tonewood(&["predict", "--bogus"]));
    assert!(err.starts_with("error: UsageError"), "{err}");
    let err = one_line_error(&tonewood(&["predict", "--model", "/nonexistent/model.json"]));
    assert!(err.starts_with("error: MissingInput"), "{err}");
    let err = one_line_error(&tonewood(&["study", "nope", "--model", "m.json", "--out", "x"]));
    assert!(err.contains("InvalidParams"), "{err}");
    assert!(tonewood(&["--help"]).status.success());
}

#[test]
fn optimize_needs_its_targets() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    synthetic_model(&model);
    let run = dir.path().join("run.json");
    let args = [
        "optimize",
        "--model",
        model.to_str().unwrap(),
        "--loss",
        "mode",
        "--beta",
        "100",
        "--out",
        run.to_str().unwrap(),
    ];
    let err = one_line_error(&tonewood(&args));
    assert!(err.contains("--mode"), "{err}");
}

#[test]
fn study_writes_report_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    synthetic_model(&model);
    let out = dir.path().join("eq");
    let args = [
        "study",
        "equivalence",
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--replicates",
        "2",
        "--sigmas",
        "0.02,0.05",
        "--seed",
        "4",
    ];
    let summary = stdout_json(&tonewood(&args));
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["artifacts"].as_array().unwrap().len(), 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 16);
    assert_eq!(report["seed"], 4);
    assert!(one_line_error(&tonewood(&args)).contains("OutputExists"));
}
