use serde_json::Value;
use tonewood::dataset::{split_indices, DatasetConfig, DatasetMeta, Sample, SampleSet, FORMAT_VERSION};
use tonewood::geometry::{perturb, Families, ReferencePlate};
use tonewood::oracle::MODE_COUNT;
use tonewood::surrogate::{SurrogateModel, TrainConfig};
use tonewood_web::api;

fn model_json() -> String {
    let base = ReferencePlate::violin().params();
    let n = 400;
    let samples = (0..n)
        .map(|i| {
            let params = perturb(&base, Families::ALL, 0.05, i as u64).unwrap();
            let v = params.to_vector();
            let s = v[..20].iter().sum::<f64>() / 20.0;
            let freqs_hz = (1..=MODE_COUNT)
                .map(|k| 100.0 * k as f64 + 40.0 * k as f64 * (s - 1.0) + 30.0 * (v[k] - 1.0))
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
    let set = SampleSet { meta, samples };
    SurrogateModel::train(&set, &TrainConfig { hidden: 6, max_epochs: 30, ..Default::default() })
        .unwrap()
        .to_json()
        .unwrap()
}

#[test]
fn outline_of_reference_matches_library() {
    let params = api::reference_params();
    let boundary: Vec<[f64; 2]> = serde_json::from_str(&api::outline(&params, 128).unwrap()).unwrap();
    let r = ReferencePlate::violin();
    assert_eq!(boundary, r.realize_with_density(&r.params(), 128).unwrap().boundary);
    assert!(api::outline("{}", 128).is_err());
}

#[test]
fn predict_and_optimize_round_trip() {
    let json = model_json();
    let s = api::Surrogate::new(&json).unwrap();
    let params = api::reference_params();
    let p: Value = serde_json::from_str(&s.predict(&params).unwrap()).unwrap();
    let expected = SurrogateModel::from_json(&json).unwrap().predict(&ReferencePlate::violin().params());
    let freqs: Vec<f64> = serde_json::from_value(p["freqs_hz"].clone()).unwrap();
    assert_eq!(freqs, expected);

    let target = 1.02 * p["f52"].as_f64().unwrap();
    let r: Value = serde_json::from_str(&s.optimize_ratio(&params, target).unwrap()).unwrap();
    assert!((r["f52"].as_f64().unwrap() - target).abs() < 1e-3 * target);
    let trace: Vec<f64> = serde_json::from_value(r["trace"].clone()).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(api::Surrogate::new("not json").is_err());
}
