//! Labeled datasets of perturbed plates and their oracle spectra.
//!
//! Files are JSON lines: a metadata record first, then one record per sample
//! in index order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{perturb_with, Families, FamilySigma, PlateParams, ReferencePlate, PARAM_DIM};
use crate::oracle::{self, OracleConfig, MODE_COUNT};
use crate::parallel;

pub const FORMAT_VERSION: u32 = 1;
pub const MIN_SAMPLES: usize = 100;
/// Fraction of oracle failures tolerated before generation is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.01;
/// Redraws per sample when a perturbation yields an unusable plate.
const MAX_SAMPLE_ATTEMPTS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub sigma: FamilySigma,
    #[serde(default = "all_families")]
    pub families: Families,
    pub seed: u64,
    pub oracle: OracleConfig,
    /// Worker threads for labeling; 0 uses every core. Not part of the output.
    #[serde(skip)]
    pub workers: usize,
}

fn all_families() -> Families {
    Families::ALL
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            sigma: FamilySigma::uniform(0.05),
            families: Families::ALL,
            seed: 1,
            oracle: OracleConfig::default(),
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub config: DatasetConfig,
    /// Components redrawn because they left their admissible range.
    pub component_redraws: usize,
    /// Whole samples redrawn because the plate was geometrically invalid.
    pub geometry_rejections: usize,
    /// Whole samples redrawn because the oracle failed.
    pub oracle_failures: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub params: PlateParams,
    pub freqs_hz: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Meta { meta: DatasetMeta },
    Sample(Sample),
}

enum Outcome {
    Labeled { sample: Box<Sample>, component_redraws: usize, rejections: usize, failures: usize },
    Failed { failures: usize, last: Error },
}

fn is_geometry_error(e: &Error) -> bool {
    matches!(
        e,
        Error::SelfIntersectingOutline { .. }
            | Error::NonPositiveThickness { .. }
            | Error::PerturbationInfeasible { .. }
    )
}

fn label_one(reference: &ReferencePlate, config: &DatasetConfig, index: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let base = reference.params();
    let (mut component_redraws, mut rejections, mut failures) = (0, 0, 0);
    let mut last = Error::InvalidParams("no attempt made".into());
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let params = match perturb_with(&base, config.families, config.sigma, &mut rng) {
            Ok((p, r)) => {
                component_redraws += r;
                p
            }
            Err(e) => {
                rejections += 1;
                last = e;
                continue;
            }
        };
        match oracle::evaluate(reference, &params, &config.oracle) {
            Ok(modes) => {
                let sample = Sample { index, params, freqs_hz: modes.freqs_hz };
                return Outcome::Labeled { sample: Box::new(sample), component_redraws, rejections, failures };
            }
            Err(e) if is_geometry_error(&e) => {
                rejections += 1;
                last = e;
            }
            Err(e) => {
                failures += 1;
                last = e;
            }
        }
    }
    Outcome::Failed { failures, last }
}

/// Draws `n` perturbations of the reference and labels each with the oracle.
pub fn generate(reference: &ReferencePlate, config: &DatasetConfig) -> Result<SampleSet> {
    generate_with_progress(reference, config, &|_| {})
}

/// As [`generate`], calling `progress(done)` after each labeled sample.
pub fn generate_with_progress(
    reference: &ReferencePlate,
    config: &DatasetConfig,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<SampleSet> {
    if config.n < MIN_SAMPLES {
        return Err(Error::DatasetTooSmall(format!("{} samples requested, need at least {MIN_SAMPLES}", config.n)));
    }
    for s in [config.sigma.outline, config.sigma.thickness, config.sigma.material] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma {s} must be non-negative")));
        }
    }
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes = parallel::map_indexed(config.n, config.workers, |i| {
        let out = label_one(reference, config, i);
        progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
        out
    });

    let mut samples = Vec::with_capacity(config.n);
    let (mut component_redraws, mut geometry_rejections, mut oracle_failures) = (0, 0, 0);
    let mut abandoned = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Labeled { sample, component_redraws: c, rejections, failures } => {
                component_redraws += c;
                geometry_rejections += rejections;
                oracle_failures += failures;
                samples.push(*sample);
            }
            Outcome::Failed { failures, last } => {
                oracle_failures += failures;
                abandoned.push(last);
            }
        }
    }
    if oracle_failures as f64 > MAX_FAILURE_RATE * config.n as f64 {
        return Err(Error::OracleFailureRate { failed: oracle_failures, total: config.n });
    }
    if let Some(e) = abandoned.into_iter().next() {
        return Err(e);
    }
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        config: config.clone(),
        component_redraws,
        geometry_rejections,
        oracle_failures,
        split: split_indices(config.n, config.seed),
    };
    Ok(SampleSet { meta, samples })
}

/// Shuffled 9/1 partition of `0..n`; both lists are returned sorted.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let n_test = (n as f64 / 10.0).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Split { seed, train, test }
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Replaces the split with a fresh shuffle.
    pub fn resplit(&mut self, seed: u64) -> Result<()> {
        if self.len() < 10 {
            return Err(Error::DatasetTooSmall(format!("cannot split {} samples", self.len())));
        }
        self.meta.split = split_indices(self.len(), seed);
        Ok(())
    }

    pub fn indices(&self, partition: Partition) -> Vec<usize> {
        match partition {
            Partition::Train => self.meta.split.train.clone(),
            Partition::Test => self.meta.split.test.clone(),
            Partition::All => (0..self.len()).collect(),
        }
    }

    pub fn inputs(&self, partition: Partition) -> Vec<[f64; PARAM_DIM]> {
        self.indices(partition).into_iter().map(|i| self.samples[i].params.to_vector()).collect()
    }

    pub fn outputs(&self, partition: Partition) -> Vec<[f64; MODE_COUNT]> {
        self.indices(partition)
            .into_iter()
            .map(|i| {
                let mut y = [0.0; MODE_COUNT];
                y.copy_from_slice(&self.samples[i].freqs_hz);
                y
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer(&mut out, &Record::Meta { meta: self.meta.clone() })?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::InvalidParams("empty dataset file".into()))??;
        let meta = match serde_json::from_str(&first)? {
            Record::Meta { meta } => meta,
            Record::Sample(_) => return Err(Error::InvalidParams("dataset file lacks a metadata header".into())),
        };
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(&line)?;
            if s.index != samples.len() || s.freqs_hz.len() != MODE_COUNT {
                return Err(Error::InvalidParams(format!("malformed sample record {}", s.index)));
            }
            samples.push(s);
        }
        let set = Self { meta, samples };
        set.check_split()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }

    fn check_split(&self) -> Result<()> {
        let mut seen = vec![false; self.len()];
        for &i in self.meta.split.train.iter().chain(&self.meta.split.test) {
            if i >= self.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParams(format!("split index {i} out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParams("split does not cover every sample".into()));
        }
        Ok(())
    }

    /// SHA-256 of the serialized file, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        self.write_jsonl(&mut bytes).expect("writing to memory");
        hex_digest(&bytes)
    }

    /// Re-solves the listed samples and returns the largest relative deviation
    /// from the stored labels.
    pub fn max_label_deviation(&self, reference: &ReferencePlate, indices: &[usize]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &i in indices {
            let s = &self.samples[i];
            let modes = oracle::evaluate(reference, &s.params, &self.meta.config.oracle)?;
            for (a, b) in modes.freqs_hz.iter().zip(&s.freqs_hz) {
                worst = worst.max((a - b).abs() / b);
            }
        }
        Ok(worst)
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_disjointness() {
        for (n, train, test) in [(1000, 900, 100), (10, 9, 1), (3000, 2700, 300)] {
            let s = split_indices(n, 3);
            assert_eq!((s.train.len(), s.test.len()), (train, test));
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert_ne!(split_indices(1000, 1).test, split_indices(1000, 2).test);
    }

    #[test]
    fn too_small_rejected() {
        let cfg = DatasetConfig { n: 99, ..Default::default() };
        assert!(matches!(generate(&ReferencePlate::violin(), &cfg), Err(Error::DatasetTooSmall(_))));
    }

    #[test]
    fn header_is_required() {
        let line = r#"{"index":0,"params":{"p":[],"t":[],"m":{}},"freqs_hz":[]}"#;
        assert!(SampleSet::read_jsonl(line.as_bytes()).is_err());
    }
}
