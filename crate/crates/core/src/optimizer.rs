//! Bounded Nelder–Mead over surrogate predictions.
//!
//! Box constraints are removed by the substitution `x = lo + (hi − lo) sin²(z)`,
//! so the simplex moves freely in `z` while every evaluated `x` stays inside
//! the box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlateParams, ReferencePlate, MATERIAL_OFFSET, OUTLINE_DIM, PARAM_DIM};
use crate::oracle::{self, OracleConfig, MODE_COUNT};
use crate::surrogate::{SurrogateModel, R2_THRESHOLD};

/// Relative half-width of the optimization box around the start point.
pub const MAX_CHANGE: f64 = 0.2;
pub const EVALS_PER_VARIABLE: usize = 200;

/// Target functions on a ten-mode spectrum. Mode numbers are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `(α − f5/f2)²`
    RatioTarget { alpha: f64 },
    /// `(β − f_i)²`
    ModeTarget { mode: usize, beta: f64 },
    /// Mean of `|f − f_ref| / f_ref` over the ten modes.
    SpectrumMeanAbs { reference: Vec<f64> },
    /// `|mean(f) − mean(f_ref)| / mean(f_ref)`
    MeanShift { reference: Vec<f64> },
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LossSpec::RatioTarget { alpha } => *alpha > 0.0 && alpha.is_finite(),
            LossSpec::ModeTarget { mode, beta } => (1..=MODE_COUNT).contains(mode) && beta.is_finite(),
            LossSpec::SpectrumMeanAbs { reference } | LossSpec::MeanShift { reference } => {
                reference.len() == MODE_COUNT && reference.iter().all(|f| *f > 0.0 && f.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid loss specification {self:?}")))
        }
    }

    pub fn eval(&self, freqs: &[f64]) -> f64 {
        match self {
            LossSpec::RatioTarget { alpha } => (alpha - freqs[4] / freqs[1]).powi(2),
            LossSpec::ModeTarget { mode, beta } => (beta - freqs[mode - 1]).powi(2),
            LossSpec::SpectrumMeanAbs { reference } => {
                freqs.iter().zip(reference).map(|(f, r)| (f - r).abs() / r).sum::<f64>() / reference.len() as f64
            }
            LossSpec::MeanShift { reference } => {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let m_ref = mean(reference);
                (mean(&freqs[..reference.len()]) - m_ref).abs() / m_ref
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Largest vertex distance from the best vertex, in transformed coordinates.
    pub size_tolerance: f64,
    /// Largest loss difference from the best vertex.
    pub spread_tolerance: f64,
    pub evals_per_variable: usize,
    /// Initial simplex step as a fraction of each coordinate's box half-width.
    pub step_fraction: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            size_tolerance: 1e-6,
            spread_tolerance: 1e-10,
            evals_per_variable: EVALS_PER_VARIABLE,
            step_fraction: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluation: usize,
    pub best_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub loss: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TracePoint>,
}

/// Coordinate map between a box and the unconstrained simplex space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxTransform {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxTransform {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len()
            || lower.iter().zip(&upper).any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u)
        {
            return Err(Error::InvalidParams("bounds must be finite with lower ≤ upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn to_box(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.lower.iter().zip(&self.upper)).map(|(z, (l, u))| l + (u - l) * z.sin().powi(2)).collect()
    }

    pub fn from_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| if u > l { ((x - l) / (u - l)).clamp(0.0, 1.0).sqrt().asin() } else { 0.0 })
            .collect()
    }
}

/// Nelder–Mead in transformed coordinates with standard coefficients
/// (reflection 1, expansion 2, contraction ½, shrink ½). Stops when both the
/// simplex size and the loss spread fall below tolerance, or when the
/// `evals_per_variable · n` budget is spent. `observer` sees every evaluation.
pub fn minimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    bounds: &BoxTransform,
    opts: &NelderMeadOptions,
    observer: &mut dyn FnMut(&TracePoint),
) -> Result<Minimum> {
    let n = start.len();
    if n == 0 || bounds.lower.len() != n {
        return Err(Error::InvalidParams("start point and bounds must share a nonzero dimension".into()));
    }
    let budget = opts.evals_per_variable * n;
    let mut evals = 0usize;
    let mut best = (start.to_vec(), f64::INFINITY);
    let mut trace = Vec::new();

    let mut eval = |z: &[f64],
                    evals: &mut usize,
                    best: &mut (Vec<f64>, f64),
                    trace: &mut Vec<TracePoint>|
     -> Result<Option<f64>> {
        if *evals >= budget {
            return Ok(None);
        }
        let x = bounds.to_box(z);
        let f = objective(&x);
        *evals += 1;
        if f.is_nan() {
            return Err(Error::ObjectiveNaN { evaluation: *evals });
        }
        if f < best.1 {
            *best = (x, f);
        }
        let point = TracePoint { evaluation: *evals, best_loss: best.1 };
        observer(&point);
        trace.push(point);
        Ok(Some(f))
    };

    // Initial simplex: start plus one step per coordinate, taken inward.
    let z0 = bounds.from_box(start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let Some(f0) = eval(&z0, &mut evals, &mut best, &mut trace)? else { unreachable!("budget is positive") };
    simplex.push((z0.clone(), f0));
    for i in 0..n {
        let half = 0.5 * (bounds.upper[i] - bounds.lower[i]);
        let step = opts.step_fraction * half;
        let mut x = start.to_vec();
        x[i] = if start[i] + step <= bounds.upper[i] { start[i] + step } else { start[i] - step };
        let mut z = z0.clone();
        z[i] = bounds.from_box(&x)[i];
        if z[i] == z0[i] {
            z[i] += 0.00025;
        }
        let Some(f) = eval(&z, &mut evals, &mut best, &mut trace)? else {
            return Ok(finish(best, evals, 0, Status::BudgetExhausted, trace));
        };
        simplex.push((z, f));
    }

    let mut iterations = 0;
    loop {
        // Stable sort keeps insertion order among ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let spread = simplex.iter().map(|v| (v.1 - f_best).abs()).fold(0.0, f64::max);
        let size = simplex
            .iter()
            .skip(1)
            .map(|v| v.0.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= opts.size_tolerance && spread <= opts.spread_tolerance {
            return Ok(finish(best, evals, iterations, Status::Converged, trace));
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v.0[d]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(1.0);
        let Some(fr) = eval(&xr, &mut evals, &mut best, &mut trace)? else { break };
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let Some(fe) = eval(&xe, &mut evals, &mut best, &mut trace)? else { break };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, outside) = if fr < worst.1 { (along(0.5), true) } else { (along(-0.5), false) };
        let Some(fc) = eval(&xc, &mut evals, &mut best, &mut trace)? else { break };
        if (outside && fc <= fr) || (!outside && fc < worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        let mut exhausted = false;
        for v in simplex.iter_mut().skip(1) {
            let z: Vec<f64> = anchor.iter().zip(&v.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
            match eval(&z, &mut evals, &mut best, &mut trace)? {
                Some(f) => *v = (z, f),
                None => {
                    exhausted = true;
                    break;
                }
            }
        }
        if exhausted {
            break;
        }
    }
    Ok(finish(best, evals, iterations, Status::BudgetExhausted, trace))
}

fn finish(
    best: (Vec<f64>, f64),
    evaluations: usize,
    iterations: usize,
    status: Status,
    trace: Vec<TracePoint>,
) -> Minimum {
    Minimum { x: best.0, loss: best.1, evaluations, iterations, status, trace }
}

/// A completed surrogate-driven design optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub spec: LossSpec,
    /// Indices into the 35-vector that were optimized.
    pub free: Vec<usize>,
    pub start: PlateParams,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: usize,
    pub evaluations: usize,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TracePoint>,
    pub start_loss: f64,
    pub best_loss: f64,
    pub best: PlateParams,
    pub predicted_hz: Vec<f64>,
}

/// Admissible open interval of component `i`, shrunk slightly.
fn admissible(i: usize) -> (f64, f64) {
    match i {
        i if i < OUTLINE_DIM => (0.0, 1.9999),
        i if i >= MATERIAL_OFFSET + 4 => (0.0, 0.4999),
        _ => (0.0, f64::INFINITY),
    }
}

/// The ±20% box around `start` for the free components.
pub fn design_bounds(start: &[f64], free: &[usize]) -> Result<BoxTransform> {
    let mut lower = Vec::with_capacity(free.len());
    let mut upper = Vec::with_capacity(free.len());
    for &i in free {
        let (lo, hi) = admissible(i);
        let v = start[i];
        lower.push(((1.0 - MAX_CHANGE) * v).max(lo));
        upper.push(((1.0 + MAX_CHANGE) * v).min(hi));
    }
    BoxTransform::new(lower, upper)
}

/// Minimizes `spec` over the free components of `start` with the surrogate.
pub fn optimize_design(
    model: &SurrogateModel,
    spec: &LossSpec,
    start: &PlateParams,
    free: &[usize],
    opts: &NelderMeadOptions,
    observer: &mut dyn FnMut(&TracePoint),
) -> Result<OptimizationRun> {
    model.gate(R2_THRESHOLD)?;
    optimize_unchecked(model, spec, start, free, opts, observer)
}

/// As [`optimize_design`] without the model-quality gate.
pub fn optimize_unchecked(
    model: &SurrogateModel,
    spec: &LossSpec,
    start: &PlateParams,
    free: &[usize],
    opts: &NelderMeadOptions,
    observer: &mut dyn FnMut(&TracePoint),
) -> Result<OptimizationRun> {
    spec.validate()?;
    start.validate()?;
    if free.is_empty() || free.iter().any(|&i| i >= PARAM_DIM) {
        return Err(Error::InvalidParams("free variables must be a nonempty subset of 0..35".into()));
    }
    let base = start.to_vector();
    let bounds = design_bounds(&base, free)?;
    let x0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    let assemble = |x: &[f64]| {
        let mut v = base;
        for (&i, &xi) in free.iter().zip(x) {
            v[i] = xi;
        }
        v
    };
    let start_loss = spec.eval(&model.predict_vector(&base));
    let mut objective = |x: &[f64]| spec.eval(&model.predict_vector(&assemble(x)));
    let min = minimize(&mut objective, &x0, &bounds, opts, observer)?;
    let best_vec = assemble(&min.x);
    let best = PlateParams::from_vector(&best_vec)?;
    Ok(OptimizationRun {
        spec: spec.clone(),
        free: free.to_vec(),
        start: *start,
        lower: bounds.lower,
        upper: bounds.upper,
        budget: opts.evals_per_variable * free.len(),
        evaluations: min.evaluations,
        iterations: min.iterations,
        status: min.status,
        trace: min.trace,
        start_loss,
        best_loss: min.loss,
        predicted_hz: model.predict_vector(&best_vec),
        best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub oracle_hz: Vec<f64>,
    pub predicted_hz: Vec<f64>,
    /// `|f_oracle − f_pred| / f_oracle` per mode.
    pub relative_errors: Vec<f64>,
    pub f52_oracle: f64,
    pub f52_predicted: f64,
    pub f52_relative_error: f64,
}

/// Solves the optimized design with the oracle and compares with the surrogate.
pub fn cross_validate(
    run: &OptimizationRun,
    reference: &ReferencePlate,
    config: &OracleConfig,
) -> Result<CrossValidation> {
    compare_with_oracle(&run.best, &run.predicted_hz, reference, config)
}

pub fn compare_with_oracle(
    params: &PlateParams,
    predicted_hz: &[f64],
    reference: &ReferencePlate,
    config: &OracleConfig,
) -> Result<CrossValidation> {
    let modes = oracle::evaluate(reference, params, config)?;
    let relative_errors = modes.freqs_hz.iter().zip(predicted_hz).map(|(o, p)| (o - p).abs() / o).collect();
    let f52_oracle = modes.f52();
    let f52_predicted = predicted_hz[4] / predicted_hz[1];
    Ok(CrossValidation {
        relative_errors,
        f52_relative_error: (f52_oracle - f52_predicted).abs() / f52_oracle,
        f52_oracle,
        f52_predicted,
        oracle_hz: modes.freqs_hz,
        predicted_hz: predicted_hz.to_vec(),
    })
}
