//! Desk-scale design studies built on a trained surrogate, the optimizer and
//! the oracle.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    perturb_with, Families, FamilySigma, PlateParams, ReferencePlate, MATERIAL_OFFSET, OUTLINE_DIM, THICKNESS_OFFSET,
};
use crate::optimizer::{cross_validate, optimize_design, LossSpec, NelderMeadOptions, OptimizationRun, Status};
use crate::oracle::{self, OracleConfig, MODE_COUNT};
use crate::parallel::map_indexed;
use crate::surrogate::SurrogateModel;

pub const RATIO_TARGET: f64 = 2.3;
pub const TARGET_TOLERANCE: f64 = 0.01;
pub const MODE_SHIFT: f64 = 0.05;
pub const EQUIVALENCE_SIGMAS: [f64; 4] = [0.01, 0.02, 0.05, 0.1];
pub const MATERIAL_SIGMA: f64 = 0.2;
pub const REPLICATES: usize = 20;
/// Grid multipliers −10% … +10% in 2% steps.
pub const GRID_STEPS: usize = 11;
pub const GRID_SPAN: f64 = 0.1;

/// Longitudinal wave speed `sqrt(E / ρ)` in m/s.
pub fn wave_speed(rho: f64, e_y: f64) -> f64 {
    (e_y / rho).sqrt()
}

pub fn outline_vars() -> Vec<usize> {
    (0..OUTLINE_DIM).collect()
}

pub fn thickness_vars() -> Vec<usize> {
    (THICKNESS_OFFSET..MATERIAL_OFFSET).collect()
}

pub fn geometry_vars() -> Vec<usize> {
    (0..MATERIAL_OFFSET).collect()
}

/// Shared inputs of every study.
#[derive(Clone, Copy)]
pub struct StudyContext<'a> {
    pub reference: &'a ReferencePlate,
    pub model: &'a SurrogateModel,
    pub options: &'a NelderMeadOptions,
    pub oracle: &'a OracleConfig,
    pub workers: usize,
    pub seed: u64,
}

impl StudyContext<'_> {
    fn optimize(&self, spec: &LossSpec, start: &PlateParams, free: &[usize]) -> Result<OptimizationRun> {
        optimize_design(self.model, spec, start, free, self.options, &mut |_| {})
    }

    fn reference_prediction(&self) -> Vec<f64> {
        self.model.predict(&self.reference.params())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn parallel<T: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
        map_indexed(n, self.workers, f).into_iter().collect()
    }
}

fn max_relative_change(run: &OptimizationRun) -> f64 {
    let (a, b) = (run.start.to_vector(), run.best.to_vector());
    run.free.iter().map(|&i| (b[i] / a[i] - 1.0).abs()).fold(0.0, f64::max)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Least-squares line `y = slope·x + intercept` with Pearson `r` and `r²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r = sxy / (sxx * syy).sqrt();
    LinearFit { slope, intercept: my - slope * mx, r, r_squared: r * r }
}

/// A labelled parameter vector whose outline is exported as a polyline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlineArtifact {
    pub label: String,
    pub boundary: Vec<[f64; 2]>,
}

/// Flat table written as CSV.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub trait StudyOutput: Serialize {
    const ID: &'static str;
    fn table(&self) -> Table;
    /// Labelled designs whose outlines are exported.
    fn designs(&self) -> Vec<(String, PlateParams)>;
}

/// Writes `report.json`, `<id>.csv` and `outlines.json` into `dir` and
/// returns their paths.
pub fn write_report<S: StudyOutput>(report: &S, reference: &ReferencePlate, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    fs::write(&json, serde_json::to_string_pretty(report)?)?;

    let csv_path = dir.join(format!("{}.csv", S::ID));
    let table = report.table();
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;

    let outlines: Vec<OutlineArtifact> = std::iter::once(("reference".to_string(), reference.params()))
        .chain(report.designs())
        .map(|(label, params)| Ok(OutlineArtifact { label, boundary: reference.realize(&params)?.boundary }))
        .collect::<Result<_>>()?;
    let outline_path = dir.join("outlines.json");
    fs::write(&outline_path, serde_json::to_string(&outlines)?)?;
    Ok(vec![json, csv_path, outline_path])
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- ratio

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub alpha: f64,
    pub predicted_f52: f64,
    pub oracle_f52: f64,
    /// `|oracle − predicted| / oracle`
    pub f52_relative_error: f64,
    pub loss: f64,
    pub evaluations: usize,
    pub status: Status,
    pub boundary_limited: bool,
    pub mean_width_mm: f64,
    pub max_relative_change: f64,
    pub params: PlateParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub reference_predicted_f52: f64,
    pub reference_oracle_f52: f64,
    pub reference_width_mm: f64,
    pub rows: Vec<RatioRow>,
    /// Pearson correlation of mean bout width against predicted f52 over the
    /// reference and every optimized design.
    pub width_f52_correlation: f64,
}

/// Default target list: `α` and `α ± 5%`.
pub fn default_alphas() -> Vec<f64> {
    vec![RATIO_TARGET * 0.95, RATIO_TARGET, RATIO_TARGET * 1.05]
}

/// Optimizes `(α − f5/f2)²` over the outline for each `α` and checks every
/// optimum with the oracle.
pub fn study_ratio(ctx: &StudyContext, alphas: &[f64]) -> Result<RatioReport> {
    let start = ctx.reference.params();
    let levels = ctx.reference.bout_levels;
    let free = outline_vars();
    let rows = ctx.parallel(alphas.len(), |k| {
        let alpha = alphas[k];
        let run = ctx.optimize(&LossSpec::RatioTarget { alpha }, &start, &free)?;
        let cv = cross_validate(&run, ctx.reference, ctx.oracle)?;
        let width = ctx.reference.realize(&run.best)?.mean_width(&levels);
        Ok(RatioRow {
            alpha,
            predicted_f52: cv.f52_predicted,
            oracle_f52: cv.f52_oracle,
            f52_relative_error: cv.f52_relative_error,
            loss: run.best_loss,
            evaluations: run.evaluations,
            status: run.status,
            boundary_limited: (cv.f52_predicted - alpha).abs() >= TARGET_TOLERANCE,
            mean_width_mm: width * 1e3,
            max_relative_change: max_relative_change(&run),
            params: run.best,
        })
    })?;
    let reference_prediction = ctx.reference_prediction();
    let reference_oracle = oracle::evaluate(ctx.reference, &start, ctx.oracle)?;
    let reference_width_mm = ctx.reference.realize(&start)?.mean_width(&levels) * 1e3;
    let reference_predicted_f52 = reference_prediction[4] / reference_prediction[1];
    let widths: Vec<f64> = std::iter::once(reference_width_mm).chain(rows.iter().map(|r| r.mean_width_mm)).collect();
    let f52s: Vec<f64> = std::iter::once(reference_predicted_f52).chain(rows.iter().map(|r| r.predicted_f52)).collect();
    Ok(RatioReport {
        seed: ctx.seed,
        alphas: alphas.to_vec(),
        reference_predicted_f52,
        reference_oracle_f52: reference_oracle.f52(),
        reference_width_mm,
        width_f52_correlation: linear_fit(&widths, &f52s).r,
        rows,
    })
}

impl StudyOutput for RatioReport {
    const ID: &'static str = "ratio";

    fn table(&self) -> Table {
        Table {
            header: vec![
                "alpha",
                "predicted_f52",
                "oracle_f52",
                "f52_relative_error",
                "loss",
                "evaluations",
                "boundary_limited",
                "mean_width_mm",
                "max_relative_change",
            ],
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.alpha),
                        fmt(r.predicted_f52),
                        fmt(r.oracle_f52),
                        fmt(r.f52_relative_error),
                        fmt(r.loss),
                        r.evaluations.to_string(),
                        r.boundary_limited.to_string(),
                        fmt(r.mean_width_mm),
                        fmt(r.max_relative_change),
                    ]
                })
                .collect(),
        }
    }

    fn designs(&self) -> Vec<(String, PlateParams)> {
        self.rows.iter().map(|r| (format!("alpha={:.4}", r.alpha), r.params)).collect()
    }
}

// ---------------------------------------------------------- single modes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeShiftRow {
    /// 1-based mode number.
    pub mode: usize,
    /// +1 raises the target, −1 lowers it.
    pub sign: i8,
    pub beta: f64,
    pub start_hz: f64,
    pub achieved_hz: f64,
    /// `|f_i − β| / β` before and after optimization.
    pub start_gap: f64,
    pub final_gap: f64,
    /// Mean distance of outline control points from the reference, in mm.
    pub displacement_mm: f64,
    pub evaluations: usize,
    pub status: Status,
    pub params: PlateParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleModeReport {
    pub seed: u64,
    pub shift: f64,
    pub reference_hz: Vec<f64>,
    pub rows: Vec<ModeShiftRow>,
    /// Mean displacement per mode over both signs.
    pub mean_displacement_mm: Vec<f64>,
    /// Modes ordered by decreasing mean displacement.
    pub ranking: Vec<usize>,
    pub mode1_exceeds_mode2: bool,
}

/// Mean distance between corresponding outline control points, in mm.
pub fn outline_displacement_mm(reference: &ReferencePlate, params: &PlateParams) -> Result<f64> {
    let a = reference.realize(&reference.params())?.control_points;
    let b = reference.realize(params)?.control_points;
    let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).collect();
    Ok(mean(&d) * 1e3)
}

/// Optimizes `(β − f_i)²` with `β = f_i^ref (1 ± shift)` over the outline for
/// every mode and sign. `f^ref` is the surrogate's reference prediction.
pub fn study_single_modes(ctx: &StudyContext, shift: f64) -> Result<SingleModeReport> {
    let start = ctx.reference.params();
    let reference_hz = ctx.reference_prediction();
    let free = outline_vars();
    let rows = ctx.parallel(2 * MODE_COUNT, |k| {
        let (mode, sign) = (k / 2 + 1, if k % 2 == 0 { 1i8 } else { -1 });
        let f0 = reference_hz[mode - 1];
        let beta = f0 * (1.0 + sign as f64 * shift);
        let run = ctx.optimize(&LossSpec::ModeTarget { mode, beta }, &start, &free)?;
        let achieved_hz = run.predicted_hz[mode - 1];
        Ok(ModeShiftRow {
            mode,
            sign,
            beta,
            start_hz: f0,
            achieved_hz,
            start_gap: (f0 - beta).abs() / beta,
            final_gap: (achieved_hz - beta).abs() / beta,
            displacement_mm: outline_displacement_mm(ctx.reference, &run.best)?,
            evaluations: run.evaluations,
            status: run.status,
            params: run.best,
        })
    })?;
    let mean_displacement_mm: Vec<f64> = (1..=MODE_COUNT)
        .map(|m| mean(&rows.iter().filter(|r| r.mode == m).map(|r| r.displacement_mm).collect::<Vec<_>>()))
        .collect();
    let mut ranking: Vec<usize> = (1..=MODE_COUNT).collect();
    ranking.sort_by(|a, b| mean_displacement_mm[b - 1].total_cmp(&mean_displacement_mm[a - 1]));
    Ok(SingleModeReport {
        seed: ctx.seed,
        shift,
        reference_hz,
        mode1_exceeds_mode2: mean_displacement_mm[0] > mean_displacement_mm[1],
        mean_displacement_mm,
        ranking,
        rows,
    })
}

impl StudyOutput for SingleModeReport {
    const ID: &'static str = "single_modes";

    fn table(&self) -> Table {
        Table {
            header: vec![
                "mode",
                "sign",
                "beta",
                "start_hz",
                "achieved_hz",
                "start_gap",
                "final_gap",
                "displacement_mm",
                "evaluations",
            ],
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.mode.to_string(),
                        r.sign.to_string(),
                        fmt(r.beta),
                        fmt(r.start_hz),
                        fmt(r.achieved_hz),
                        fmt(r.start_gap),
                        fmt(r.final_gap),
                        fmt(r.displacement_mm),
                        r.evaluations.to_string(),
                    ]
                })
                .collect(),
        }
    }

    fn designs(&self) -> Vec<(String, PlateParams)> {
        self.rows.iter().map(|r| (format!("mode={} sign={:+}", r.mode, r.sign), r.params)).collect()
    }
}

// ------------------------------------------------------------ equivalence

/// Which family is perturbed and which one compensates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    /// Outline perturbed, thickness optimized.
    Thickness,
    /// Thickness perturbed, outline optimized.
    Outline,
}

impl Compensation {
    pub const BOTH: [Compensation; 2] = [Compensation::Thickness, Compensation::Outline];

    fn perturbed(self) -> Families {
        match self {
            Compensation::Thickness => Families::OUTLINE,
            Compensation::Outline => Families::THICKNESS,
        }
    }

    fn free(self) -> Vec<usize> {
        match self {
            Compensation::Thickness => thickness_vars(),
            Compensation::Outline => outline_vars(),
        }
    }
}

/// Spectral error function of the equivalence and material studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralError {
    SpectrumMeanAbs,
    MeanShift,
}

impl SpectralError {
    pub const BOTH: [SpectralError; 2] = [SpectralError::SpectrumMeanAbs, SpectralError::MeanShift];

    pub fn spec(self, reference: &[f64]) -> LossSpec {
        let reference = reference.to_vec();
        match self {
            SpectralError::SpectrumMeanAbs => LossSpec::SpectrumMeanAbs { reference },
            SpectralError::MeanShift => LossSpec::MeanShift { reference },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub sigma: f64,
    pub compensation: Compensation,
    pub error: SpectralError,
    pub replicate: usize,
    /// RNG stream of the perturbation, shared by both error functions.
    pub stream: u64,
    pub baseline: f64,
    pub optimized: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate<K> {
    pub key: K,
    pub n: usize,
    pub baseline_mean: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceKey {
    pub sigma: f64,
    pub compensation: Compensation,
    pub error: SpectralError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub replicates: usize,
    pub reference_hz: Vec<f64>,
    pub rows: Vec<EquivalenceRow>,
    pub aggregates: Vec<Aggregate<EquivalenceKey>>,
}

impl EquivalenceReport {
    pub fn aggregate(
        &self,
        sigma: f64,
        compensation: Compensation,
        error: SpectralError,
    ) -> Option<&Aggregate<EquivalenceKey>> {
        self.aggregates
            .iter()
            .find(|a| a.key.sigma == sigma && a.key.compensation == compensation && a.key.error == error)
    }

    /// Recomputes the aggregates from the per-replicate rows.
    pub fn recompute(rows: &[EquivalenceRow]) -> Vec<Aggregate<EquivalenceKey>> {
        let mut keys: Vec<EquivalenceKey> = Vec::new();
        for r in rows {
            let key = EquivalenceKey { sigma: r.sigma, compensation: r.compensation, error: r.error };
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|key| {
                let sel: Vec<&EquivalenceRow> = rows
                    .iter()
                    .filter(|r| r.sigma == key.sigma && r.compensation == key.compensation && r.error == key.error)
                    .collect();
                let opt: Vec<f64> = sel.iter().map(|r| r.optimized).collect();
                let base: Vec<f64> = sel.iter().map(|r| r.baseline).collect();
                Aggregate { key, n: sel.len(), baseline_mean: mean(&base), mean: mean(&opt), std: std_dev(&opt) }
            })
            .collect()
    }
}

/// For each σ, compensation direction and error function: perturb one
/// family, re-optimize the other towards the reference prediction and record
/// the final error. Replicate `r` at σ index `s` uses RNG stream
/// `s·2¹⁶ + r` for both directions.
pub fn study_equivalence(ctx: &StudyContext, sigmas: &[f64], replicates: usize) -> Result<EquivalenceReport> {
    let reference_hz = ctx.reference_prediction();
    let base = ctx.reference.params();
    let mut jobs = Vec::new();
    for (s, &sigma) in sigmas.iter().enumerate() {
        for compensation in Compensation::BOTH {
            for error in SpectralError::BOTH {
                for replicate in 0..replicates {
                    jobs.push((sigma, compensation, error, replicate, ((s as u64) << 16) + replicate as u64));
                }
            }
        }
    }
    let rows = ctx.parallel(jobs.len(), |k| {
        let (sigma, compensation, error, replicate, stream) = jobs[k];
        let start = if sigma == 0.0 {
            base
        } else {
            perturb_with(&base, compensation.perturbed(), FamilySigma::uniform(sigma), &mut ctx.rng(stream))?.0
        };
        let spec = error.spec(&reference_hz);
        let run = ctx.optimize(&spec, &start, &compensation.free())?;
        Ok(EquivalenceRow {
            sigma,
            compensation,
            error,
            replicate,
            stream,
            baseline: run.start_loss,
            optimized: run.best_loss,
            evaluations: run.evaluations,
        })
    })?;
    Ok(EquivalenceReport {
        seed: ctx.seed,
        sigmas: sigmas.to_vec(),
        replicates,
        reference_hz,
        aggregates: EquivalenceReport::recompute(&rows),
        rows,
    })
}

fn error_name(e: SpectralError) -> &'static str {
    match e {
        SpectralError::SpectrumMeanAbs => "spectrum_mean_abs",
        SpectralError::MeanShift => "mean_shift",
    }
}

impl StudyOutput for EquivalenceReport {
    const ID: &'static str = "equivalence";

    fn table(&self) -> Table {
        Table {
            header: vec!["sigma", "compensation", "error", "n", "baseline_mean", "mean", "std"],
            rows: self
                .aggregates
                .iter()
                .map(|a| {
                    vec![
                        fmt(a.key.sigma),
                        match a.key.compensation {
                            Compensation::Thickness => "thickness".into(),
                            Compensation::Outline => "outline".into(),
                        },
                        error_name(a.key.error).into(),
                        a.n.to_string(),
                        fmt(a.baseline_mean),
                        fmt(a.mean),
                        fmt(a.std),
                    ]
                })
                .collect(),
        }
    }

    fn designs(&self) -> Vec<(String, PlateParams)> {
        Vec::new()
    }
}

// --------------------------------------------------------------- material

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeSet {
    Thickness,
    Outline,
    Full,
}

impl FreeSet {
    pub const ALL: [FreeSet; 3] = [FreeSet::Thickness, FreeSet::Outline, FreeSet::Full];

    pub fn vars(self) -> Vec<usize> {
        match self {
            FreeSet::Thickness => thickness_vars(),
            FreeSet::Outline => outline_vars(),
            FreeSet::Full => geometry_vars(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FreeSet::Thickness => "thickness",
            FreeSet::Outline => "outline",
            FreeSet::Full => "full",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialRow {
    pub replicate: usize,
    pub free: FreeSet,
    pub baseline: f64,
    pub optimized: f64,
    /// Optimized predicted spectrum divided by the reference prediction.
    pub normalized_hz: Vec<f64>,
    pub evaluations: usize,
    pub params: PlateParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialReport {
    pub seed: u64,
    pub sigma: f64,
    pub replicates: usize,
    pub reference_hz: Vec<f64>,
    /// Unoptimized spectra of the perturbed materials, normalized.
    pub baseline_normalized_hz: Vec<Vec<f64>>,
    pub rows: Vec<MaterialRow>,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub aggregates: Vec<Aggregate<FreeSet>>,
    /// Baseline mean over full-optimization mean.
    pub improvement_factor: f64,
}

impl MaterialReport {
    pub fn aggregate(&self, free: FreeSet) -> Option<&Aggregate<FreeSet>> {
        self.aggregates.iter().find(|a| a.key == free)
    }

    pub fn recompute(rows: &[MaterialRow]) -> Vec<Aggregate<FreeSet>> {
        FreeSet::ALL
            .iter()
            .filter_map(|&free| {
                let sel: Vec<&MaterialRow> = rows.iter().filter(|r| r.free == free).collect();
                if sel.is_empty() {
                    return None;
                }
                let opt: Vec<f64> = sel.iter().map(|r| r.optimized).collect();
                let base: Vec<f64> = sel.iter().map(|r| r.baseline).collect();
                Some(Aggregate {
                    key: free,
                    n: sel.len(),
                    baseline_mean: mean(&base),
                    mean: mean(&opt),
                    std: std_dev(&opt),
                })
            })
            .collect()
    }
}

/// Perturbs the seven material constants and optimizes the mean absolute
/// spectral error three ways. Replicate `r` uses RNG stream `r`.
pub fn study_material(ctx: &StudyContext, sigma: f64, replicates: usize) -> Result<MaterialReport> {
    let reference_hz = ctx.reference_prediction();
    let base = ctx.reference.params();
    let starts: Vec<PlateParams> = (0..replicates)
        .map(|r| {
            if sigma == 0.0 {
                Ok(base)
            } else {
                perturb_with(&base, Families::MATERIAL, FamilySigma::uniform(sigma), &mut ctx.rng(r as u64))
                    .map(|p| p.0)
            }
        })
        .collect::<Result<_>>()?;
    let spec = SpectralError::SpectrumMeanAbs.spec(&reference_hz);
    let normalize = |f: &[f64]| -> Vec<f64> { f.iter().zip(&reference_hz).map(|(a, b)| a / b).collect() };
    let rows = ctx.parallel(replicates * FreeSet::ALL.len(), |k| {
        let (replicate, free) = (k / FreeSet::ALL.len(), FreeSet::ALL[k % FreeSet::ALL.len()]);
        let run = ctx.optimize(&spec, &starts[replicate], &free.vars())?;
        Ok(MaterialRow {
            replicate,
            free,
            baseline: run.start_loss,
            optimized: run.best_loss,
            normalized_hz: normalize(&run.predicted_hz),
            evaluations: run.evaluations,
            params: run.best,
        })
    })?;
    let baselines: Vec<f64> = starts.iter().map(|p| spec.eval(&ctx.model.predict(p))).collect();
    let aggregates = MaterialReport::recompute(&rows);
    let full = aggregates.iter().find(|a| a.key == FreeSet::Full).map_or(f64::NAN, |a| a.mean);
    Ok(MaterialReport {
        seed: ctx.seed,
        sigma,
        replicates,
        baseline_normalized_hz: starts.iter().map(|p| normalize(&ctx.model.predict(p))).collect(),
        baseline_mean: mean(&baselines),
        baseline_std: std_dev(&baselines),
        improvement_factor: mean(&baselines) / full,
        reference_hz,
        aggregates,
        rows,
    })
}

impl StudyOutput for MaterialReport {
    const ID: &'static str = "material";

    fn table(&self) -> Table {
        let mut header = vec!["replicate", "free", "baseline", "optimized"];
        const MODES: [&str; MODE_COUNT] = ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10"];
        header.extend(MODES);
        Table {
            header,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut row =
                        vec![r.replicate.to_string(), r.free.name().into(), fmt(r.baseline), fmt(r.optimized)];
                    row.extend(r.normalized_hz.iter().map(|v| fmt(*v)));
                    row
                })
                .collect(),
        }
    }

    fn designs(&self) -> Vec<(String, PlateParams)> {
        self.rows.iter().map(|r| (format!("replicate={} free={}", r.replicate, r.free.name()), r.params)).collect()
    }
}

// ------------------------------------------------------------------- grid

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Density and longitudinal-modulus step indices, 0..GRID_STEPS.
    pub i: usize,
    pub j: usize,
    pub rho_scale: f64,
    pub e_scale: f64,
    pub rho: f64,
    pub e_long: f64,
    pub wave_speed: f64,
    pub baseline: f64,
    pub optimized: f64,
    pub area_m2: f64,
    /// Optimized area relative to the reference area, minus one.
    pub area_change: f64,
    pub evaluations: usize,
    pub params: PlateParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub seed: u64,
    pub scales: Vec<f64>,
    pub reference_wave_speed: f64,
    pub reference_area_m2: f64,
    pub cells: Vec<GridCell>,
    /// Mean error on the constant wave-speed diagonal, centre excluded.
    pub contour_mean: f64,
    /// Mean error on the anti-diagonal, centre excluded: the same distances
    /// from the centre, maximal wave-speed change.
    pub off_contour_mean: f64,
    pub area_vs_wave_speed: LinearFit,
}

impl GridReport {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.scales.len() + j]
    }
}

pub fn grid_scales() -> Vec<f64> {
    let h = 2.0 * GRID_SPAN / (GRID_STEPS - 1) as f64;
    (0..GRID_STEPS).map(|k| 1.0 - GRID_SPAN + h * k as f64).collect()
}

/// Scales density and longitudinal modulus over `scales × scales` and
/// optimizes outline and thickness at each cell towards the reference
/// prediction.
pub fn study_density_modulus_grid(ctx: &StudyContext, scales: &[f64]) -> Result<GridReport> {
    let reference_hz = ctx.reference_prediction();
    let base = ctx.reference.params();
    let reference_area = ctx.reference.realize(&base)?.area();
    let spec = SpectralError::SpectrumMeanAbs.spec(&reference_hz);
    let n = scales.len();
    let free = geometry_vars();
    let cells = ctx.parallel(n * n, |k| {
        let (i, j) = (k / n, k % n);
        let mut start = base;
        start.material.rho *= scales[i];
        start.material.e_long *= scales[j];
        let run = ctx.optimize(&spec, &start, &free)?;
        let area = ctx.reference.realize(&run.best)?.area();
        Ok(GridCell {
            i,
            j,
            rho_scale: scales[i],
            e_scale: scales[j],
            rho: start.material.rho,
            e_long: start.material.e_long,
            wave_speed: wave_speed(start.material.rho, start.material.e_long),
            baseline: run.start_loss,
            optimized: run.best_loss,
            area_m2: area,
            area_change: area / reference_area - 1.0,
            evaluations: run.evaluations,
            params: run.best,
        })
    })?;
    let centre = n / 2;
    let diag: Vec<f64> = (0..n).filter(|&k| k != centre).map(|k| cells[k * n + k].optimized).collect();
    let anti: Vec<f64> = (0..n).filter(|&k| k != centre).map(|k| cells[k * n + (n - 1 - k)].optimized).collect();
    let c: Vec<f64> = cells.iter().map(|c| c.wave_speed).collect();
    let a: Vec<f64> = cells.iter().map(|c| c.area_change).collect();
    Ok(GridReport {
        seed: ctx.seed,
        scales: scales.to_vec(),
        reference_wave_speed: wave_speed(base.material.rho, base.material.e_long),
        reference_area_m2: reference_area,
        contour_mean: mean(&diag),
        off_contour_mean: mean(&anti),
        area_vs_wave_speed: linear_fit(&c, &a),
        cells,
    })
}

impl StudyOutput for GridReport {
    const ID: &'static str = "grid";

    fn table(&self) -> Table {
        Table {
            header: vec![
                "rho_scale",
                "e_scale",
                "rho",
                "e_long",
                "wave_speed",
                "baseline",
                "optimized",
                "area_m2",
                "area_change",
                "evaluations",
            ],
            rows: self
                .cells
                .iter()
                .map(|c| {
                    vec![
                        fmt(c.rho_scale),
                        fmt(c.e_scale),
                        fmt(c.rho),
                        fmt(c.e_long),
                        fmt(c.wave_speed),
                        fmt(c.baseline),
                        fmt(c.optimized),
                        fmt(c.area_m2),
                        fmt(c.area_change),
                        c.evaluations.to_string(),
                    ]
                })
                .collect(),
        }
    }

    fn designs(&self) -> Vec<(String, PlateParams)> {
        self.cells.iter().map(|c| (format!("rho={:.2} e={:.2}", c.rho_scale, c.e_scale), c.params)).collect()
    }
}

/// Every free component of every run stays inside the ±20% box.
pub fn within_box(start: &PlateParams, best: &PlateParams, free: &[usize]) -> bool {
    let (a, b) = (start.to_vector(), best.to_vector());
    free.iter().all(|&i| b[i] >= 0.8 * a[i] - 1e-12 && b[i] <= 1.2 * a[i] + 1e-12)
}

/// Study names accepted by [`StudyName::parse`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyName {
    Ratio,
    SingleModes,
    Equivalence,
    Material,
    Grid,
}

impl StudyName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ratio" => StudyName::Ratio,
            "single-modes" | "single_modes" => StudyName::SingleModes,
            "equivalence" => StudyName::Equivalence,
            "material" => StudyName::Material,
            "grid" => StudyName::Grid,
            other => return Err(Error::InvalidParams(format!("unknown study {other:?}"))),
        })
    }
}

#[cfg(test)]
mod tests;
