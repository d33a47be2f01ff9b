use tonewood::dataset::{split_indices, DatasetConfig, DatasetMeta, Sample, SampleSet, FORMAT_VERSION};
use tonewood::geometry::{perturb, Families, ReferencePlate};
use tonewood::oracle::MODE_COUNT;
use tonewood::surrogate::{SurrogateModel, TrainConfig};

/// Smooth synthetic spectrum that a small network fits almost exactly.
pub fn synthetic_model() -> SurrogateModel {
    let base = ReferencePlate::violin().params();
    let n = 400;
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let params = perturb(&base, Families::ALL, 0.05, i as u64).unwrap();
            let v = params.to_vector();
            let s = v[..28].iter().sum::<f64>() / 28.0;
            let c = (v[29] / v[28]).sqrt() / 164.3;
            let freqs_hz = (1..=MODE_COUNT).map(|k| 100.0 * k as f64 * s * c + 5.0 * (v[k] - 1.0)).collect();
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
    SurrogateModel::train(&set, &TrainConfig { hidden: 6, max_epochs: 30, ..Default::default() }).unwrap()
}
