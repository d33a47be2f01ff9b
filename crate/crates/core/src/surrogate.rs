//! Single-hidden-layer regression network from plate parameters to the ten
//! lowest eigenfrequencies, trained by Levenberg–Marquardt.
//!
//! Inputs and outputs are z-scored with statistics of the training split. The
//! hidden layer is logistic, the output layer affine.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Partition, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::{Families, PlateParams, PARAM_DIM};
use crate::oracle::MODE_COUNT;

pub const MODEL_VERSION: u32 = 1;
pub const R2_THRESHOLD: f64 = 0.9;
/// Relative half-width of the box around the reference that the training
/// data is meant to cover.
pub const TRAINING_BOX: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    /// Test-only: turns the network into an affine map.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Sigmoid => {
                let a = 1.0 / (1.0 + (-z).exp());
                (a, a * (1.0 - a))
            }
            Activation::Identity => (z, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    /// Training stops after `patience` consecutive accepted steps that each
    /// lower the loss by less than this.
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
    /// Parameter families fed to the network.
    pub inputs: Families,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 30,
            max_epochs: 100,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e10,
            tolerance: 1e-9,
            patience: 5,
            seed: 1,
            inputs: Families::ALL,
            activation: Activation::Sigmoid,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.max_epochs > 100 {
            return Err(Error::InvalidParams(format!("max_epochs {} exceeds 100", self.max_epochs)));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidParams("network needs at least one hidden unit".into()));
        }
        if !(self.lambda_init > 0.0 && self.lambda_up > 1.0 && self.lambda_down > 1.0) {
            return Err(Error::InvalidParams("damping must be positive with factors above 1".into()));
        }
        Ok(())
    }
}

/// Per-feature z-score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits to the rows; constant features get unit scale.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(r.as_ref()).for_each(|(m, v)| *m += v / n);
        }
        let mut std = vec![0.0; dim];
        for r in rows {
            std.iter_mut().zip(r.as_ref()).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        for (s, m) in std.iter_mut().zip(&mean) {
            *s = s.sqrt();
            if *s <= 1e-12 * m.abs().max(1e-300) {
                *s = 1.0;
            }
        }
        Self { mean, std }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

/// Weights of the network. `w1` is `hidden × (inputs + 1)` with the bias in
/// the last column; `w2` is `outputs × (hidden + 1)`, likewise.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub activation: Activation,
}

impl Network {
    pub fn inputs(&self) -> usize {
        self.w1.ncols() - 1
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w2.nrows()
    }

    pub fn weight_count(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn xavier(inputs: usize, hidden: usize, outputs: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let r2 = (6.0 / (hidden + outputs) as f64).sqrt();
        let w1 = DMatrix::from_fn(hidden, inputs + 1, |_, c| if c < inputs { rng.random_range(-r1..r1) } else { 0.0 });
        let w2 = DMatrix::from_fn(outputs, hidden + 1, |_, c| if c < hidden { rng.random_range(-r2..r2) } else { 0.0 });
        Self { w1, w2, activation }
    }

    /// Normalized forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        let mut a = vec![0.0; h + 1];
        a[h] = 1.0;
        for (j, aj) in a.iter_mut().take(h).enumerate() {
            let z = self.w1.row(j).iter().zip(x.iter().chain(std::iter::once(&1.0))).map(|(w, v)| w * v).sum();
            *aj = self.activation.apply(z).0;
        }
        (0..self.outputs()).map(|k| self.w2.row(k).iter().zip(&a).map(|(w, v)| w * v).sum()).collect()
    }

    /// Normalized forward pass and `∂y/∂x` (`outputs × inputs`).
    pub fn forward_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let (h, n_in) = (self.hidden(), self.inputs());
        let mut a = vec![0.0; h + 1];
        let mut da = vec![0.0; h];
        a[h] = 1.0;
        for j in 0..h {
            let z: f64 = self.w1.row(j).iter().zip(x.iter().chain(std::iter::once(&1.0))).map(|(w, v)| w * v).sum();
            (a[j], da[j]) = self.activation.apply(z);
        }
        let y = (0..self.outputs()).map(|k| self.w2.row(k).iter().zip(&a).map(|(w, v)| w * v).sum()).collect();
        let scaled = DMatrix::from_fn(self.outputs(), h, |k, j| self.w2[(k, j)] * da[j]);
        let jac = scaled * self.w1.columns(0, n_in);
        (y, jac)
    }

    fn to_vec(&self) -> Vec<f64> {
        row_major(&self.w1).into_iter().chain(row_major(&self.w2)).collect()
    }

    fn with_weights(&self, theta: &[f64]) -> Self {
        let n1 = self.w1.len();
        Self {
            w1: DMatrix::from_row_slice(self.w1.nrows(), self.w1.ncols(), &theta[..n1]),
            w2: DMatrix::from_row_slice(self.w2.nrows(), self.w2.ncols(), &theta[n1..]),
            activation: self.activation,
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_nested(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParams("ragged weight matrix".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2_test: Vec<f64>,
    pub r2_test_aggregate: f64,
    pub r2_train_aggregate: f64,
    pub rmse_train_hz: Vec<f64>,
    pub rmse_test_hz: Vec<f64>,
    pub epochs: usize,
    /// Normalized mean squared error after each accepted step, starting
    /// with the initial weights.
    pub accepted_losses: Vec<f64>,
    pub stop_reason: String,
}

/// Coefficients of determination of `pred` against `labels`, per output and
/// aggregated as `1 − Σ SS_res / Σ SS_tot`.
pub fn r_squared<R: AsRef<[f64]>, S: AsRef<[f64]>>(labels: &[R], pred: &[S]) -> Result<(Vec<f64>, f64)> {
    if labels.is_empty() || labels.len() != pred.len() {
        return Err(Error::InvalidParams("R² needs equally sized, nonempty label and prediction sets".into()));
    }
    let dim = labels[0].as_ref().len();
    let n = labels.len() as f64;
    let mut per = Vec::with_capacity(dim);
    let (mut res_sum, mut tot_sum) = (0.0, 0.0);
    for k in 0..dim {
        let mean = labels.iter().map(|y| y.as_ref()[k]).sum::<f64>() / n;
        let tot: f64 = labels.iter().map(|y| (y.as_ref()[k] - mean).powi(2)).sum();
        let res: f64 = labels.iter().zip(pred).map(|(y, p)| (y.as_ref()[k] - p.as_ref()[k]).powi(2)).sum();
        if tot <= 1e-24 * mean.abs().max(1.0).powi(2) {
            return Err(Error::DegenerateVariance { output: k });
        }
        per.push(1.0 - res / tot);
        res_sum += res;
        tot_sum += tot;
    }
    Ok((per, 1.0 - res_sum / tot_sum))
}

fn rmse<R: AsRef<[f64]>, S: AsRef<[f64]>>(labels: &[R], pred: &[S]) -> Vec<f64> {
    let dim = labels.first().map_or(0, |y| y.as_ref().len());
    (0..dim)
        .map(|k| {
            let s: f64 = labels.iter().zip(pred).map(|(y, p)| (y.as_ref()[k] - p.as_ref()[k]).powi(2)).sum();
            (s / labels.len() as f64).sqrt()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    /// Indices into the 35-vector that feed the network.
    pub inputs: Vec<usize>,
    pub network: Network,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    /// Parameter vector at the centre of the training box.
    pub reference: Vec<f64>,
    pub fit_report: FitReport,
    pub dataset_fingerprint: String,
    pub train_config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    inputs: Vec<usize>,
    activation: Activation,
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
    input_norm: Normalizer,
    output_norm: Normalizer,
    reference: Vec<f64>,
    fit_report: FitReport,
    dataset_fingerprint: String,
    train_config: TrainConfig,
}

/// Training inputs of one epoch, in normalized coordinates.
struct Batch {
    n: usize,
    /// `n × (inputs + 1)`, trailing column of ones.
    x: Vec<f64>,
    /// `n × outputs`.
    y: Vec<f64>,
}

struct Forward {
    /// `n × (hidden + 1)`, trailing ones.
    a: Vec<f64>,
    /// `n × hidden` activation slopes.
    da: Vec<f64>,
    /// `n × outputs`, prediction minus label.
    r: Vec<f64>,
    loss: f64,
}

#[allow(clippy::too_many_arguments)]
fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], lda: usize, b: &[f64], ldb: usize, c: &mut [f64]) {
    // C (m×n) = Aᵀ B with A stored k×m (row stride lda), B stored k×n (row stride ldb).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            lda as isize,
            b.as_ptr(),
            ldb as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn forward_batch(net: &Network, batch: &Batch) -> Forward {
    let (n_in1, h, k) = (net.inputs() + 1, net.hidden(), net.outputs());
    let w1 = row_major(&net.w1);
    let w2 = row_major(&net.w2);
    let mut a = vec![0.0; batch.n * (h + 1)];
    let mut da = vec![0.0; batch.n * h];
    let mut r = vec![0.0; batch.n * k];
    let mut loss = 0.0;
    for s in 0..batch.n {
        let xs = &batch.x[s * n_in1..(s + 1) * n_in1];
        let arow = &mut a[s * (h + 1)..(s + 1) * (h + 1)];
        for j in 0..h {
            let z: f64 = w1[j * n_in1..(j + 1) * n_in1].iter().zip(xs).map(|(w, v)| w * v).sum();
            (arow[j], da[s * h + j]) = net.activation.apply(z);
        }
        arow[h] = 1.0;
        for kk in 0..k {
            let p: f64 = w2[kk * (h + 1)..(kk + 1) * (h + 1)].iter().zip(arow.iter()).map(|(w, v)| w * v).sum();
            let e = p - batch.y[s * k + kk];
            r[s * k + kk] = e;
            loss += e * e;
        }
    }
    Forward { a, da, r, loss: loss / (batch.n * k) as f64 }
}

/// Gauss–Newton matrix `JᵀJ` and gradient `Jᵀr` of the residuals, assembled
/// blockwise from the network structure instead of from `J` itself.
fn normal_equations(net: &Network, batch: &Batch, fw: &Forward) -> (DMatrix<f64>, DVector<f64>) {
    let (ni, h, k, n) = (net.inputs() + 1, net.hidden(), net.outputs(), batch.n);
    let (h1, nh) = (h + 1, h * ni);
    let dim = nh + k * h1;

    // u[s, j*ni + i] = σ'_j(s) x_i(s)
    let mut u = vec![0.0; n * nh];
    for s in 0..n {
        let xs = &batch.x[s * ni..(s + 1) * ni];
        for j in 0..h {
            let d = fw.da[s * h + j];
            let row = &mut u[s * nh + j * ni..s * nh + (j + 1) * ni];
            row.iter_mut().zip(xs).for_each(|(uij, x)| *uij = d * x);
        }
    }
    let mut uu = vec![0.0; nh * nh];
    gemm_tn(nh, n, nh, &u, nh, &u, nh, &mut uu);
    let mut ua = vec![0.0; nh * h1];
    gemm_tn(nh, n, h1, &u, nh, &fw.a, h1, &mut ua);
    let mut aa = vec![0.0; h1 * h1];
    gemm_tn(h1, n, h1, &fw.a, h1, &fw.a, h1, &mut aa);

    let g = net.w2.columns(0, h).transpose() * net.w2.columns(0, h);
    let mut jtj = DMatrix::zeros(dim, dim);
    for p in 0..nh {
        let jp = p / ni;
        for q in 0..nh {
            jtj[(p, q)] = g[(jp, q / ni)] * uu[p * nh + q];
        }
    }
    for p in 0..nh {
        let jp = p / ni;
        for kk in 0..k {
            for l in 0..h1 {
                let v = net.w2[(kk, jp)] * ua[p * h1 + l];
                let q = nh + kk * h1 + l;
                jtj[(p, q)] = v;
                jtj[(q, p)] = v;
            }
        }
    }
    for kk in 0..k {
        for l in 0..h1 {
            for m in 0..h1 {
                jtj[(nh + kk * h1 + l, nh + kk * h1 + m)] = aa[l * h1 + m];
            }
        }
    }

    // Gradient: hidden part Σ_s (r W2)_sj σ'_j x_i, output part Rᵀ A.
    let mut grad = DVector::zeros(dim);
    let mut e = vec![0.0; n * h];
    for s in 0..n {
        for j in 0..h {
            let back: f64 = (0..k).map(|kk| fw.r[s * k + kk] * net.w2[(kk, j)]).sum();
            e[s * h + j] = back * fw.da[s * h + j];
        }
    }
    let mut gh = vec![0.0; h * ni];
    gemm_tn(h, n, ni, &e, h, &batch.x, ni, &mut gh);
    let mut go = vec![0.0; k * h1];
    gemm_tn(k, n, h1, &fw.r, k, &fw.a, h1, &mut go);
    for (dst, src) in grad.iter_mut().zip(gh.iter().chain(&go)) {
        *dst = *src;
    }
    (jtj, grad)
}

/// Levenberg–Marquardt on the normalized batch. Returns the trained network,
/// accepted losses, epochs used and the stop reason.
fn levenberg_marquardt(
    mut net: Network,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>, usize, String)> {
    let mut fw = forward_batch(&net, batch);
    let mut losses = vec![fw.loss];
    let mut lambda = cfg.lambda_init;
    let mut stalled = 0;
    let mut epochs = 0;
    let reason = loop {
        if epochs >= cfg.max_epochs {
            break "epoch cap".to_string();
        }
        let (jtj, grad) = normal_equations(&net, batch, &fw);
        let theta = DVector::from_vec(net.to_vec());
        let mut accepted = None;
        let mut factored_once = false;
        while lambda <= cfg.lambda_max {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda;
            }
            if let Some(chol) = damped.cholesky() {
                factored_once = true;
                let step = chol.solve(&(-&grad));
                let trial = net.with_weights((&theta + step).as_slice());
                let tfw = forward_batch(&trial, batch);
                if tfw.loss.is_finite() && tfw.loss < fw.loss {
                    lambda = (lambda / cfg.lambda_down).max(f64::MIN_POSITIVE);
                    accepted = Some((trial, tfw));
                    break;
                }
            }
            lambda *= cfg.lambda_up;
        }
        let Some((trial, tfw)) = accepted else {
            if !factored_once {
                return Err(Error::SingularNormalEquations { damping: lambda });
            }
            break "damping limit".to_string();
        };
        epochs += 1;
        let decrease = fw.loss - tfw.loss;
        net = trial;
        fw = tfw;
        losses.push(fw.loss);
        stalled = if decrease < cfg.tolerance { stalled + 1 } else { 0 };
        if stalled >= cfg.patience {
            break "loss tolerance".to_string();
        }
    };
    Ok((net, losses, epochs, reason))
}

/// A network with its normalizers, fitted to arbitrary rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Regressor {
    pub network: Network,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub accepted_losses: Vec<f64>,
    pub epochs: usize,
    pub stop_reason: String,
}

impl Regressor {
    /// Fits `y ≈ f(x)` by Levenberg–Marquardt on z-scored data.
    pub fn fit<R: AsRef<[f64]>, S: AsRef<[f64]>>(x: &[R], y: &[S], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::DatasetTooSmall("no training rows".into()));
        }
        let (n_in, n_out) = (x[0].as_ref().len(), y[0].as_ref().len());
        let weights = cfg.hidden * (n_in + 1) + n_out * (cfg.hidden + 1);
        if x.len() * 5 <= weights {
            return Err(Error::DatasetTooSmall(format!("{} training rows for {weights} weights", x.len())));
        }
        let input_norm = Normalizer::fit(x);
        let output_norm = Normalizer::fit(y);
        let mut batch = Batch { n: x.len(), x: Vec::with_capacity(x.len() * (n_in + 1)), y: Vec::new() };
        for (xr, yr) in x.iter().zip(y) {
            batch.x.extend(input_norm.normalize(xr.as_ref()));
            batch.x.push(1.0);
            batch.y.extend(output_norm.normalize(yr.as_ref()));
        }
        let net = Network::xavier(n_in, cfg.hidden, n_out, cfg.activation, cfg.seed);
        let (network, accepted_losses, epochs, stop_reason) = levenberg_marquardt(net, &batch, cfg)?;
        Ok(Self { network, input_norm, output_norm, accepted_losses, epochs, stop_reason })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.output_norm.denormalize(&self.network.forward(&self.input_norm.normalize(x)))
    }
}

impl SurrogateModel {
    /// Trains on the set's training split and scores the test split.
    pub fn train(set: &SampleSet, cfg: &TrainConfig) -> Result<Self> {
        let inputs = cfg.inputs.indices();
        if inputs.is_empty() {
            return Err(Error::InvalidParams("network needs at least one input".into()));
        }
        let x_train: Vec<Vec<f64>> =
            set.inputs(Partition::Train).iter().map(|v| inputs.iter().map(|&i| v[i]).collect()).collect();
        let y_train = set.outputs(Partition::Train);
        let fit = Regressor::fit(&x_train, &y_train, cfg)?;

        let mut model = Self {
            inputs,
            network: fit.network,
            input_norm: fit.input_norm,
            output_norm: fit.output_norm,
            reference: crate::geometry::ReferencePlate::violin().params().to_vector().to_vec(),
            fit_report: FitReport {
                epochs: fit.epochs,
                accepted_losses: fit.accepted_losses,
                stop_reason: fit.stop_reason,
                ..Default::default()
            },
            dataset_fingerprint: set.fingerprint(),
            train_config: cfg.clone(),
        };
        let (_, r2_train) = model.r_squared(set, Partition::Train)?;
        let (r2_test, r2_test_aggregate) = model.r_squared(set, Partition::Test)?;
        model.fit_report.r2_test = r2_test;
        model.fit_report.r2_test_aggregate = r2_test_aggregate;
        model.fit_report.r2_train_aggregate = r2_train;
        model.fit_report.rmse_train_hz = model.rmse(set, Partition::Train);
        model.fit_report.rmse_test_hz = model.rmse(set, Partition::Test);
        Ok(model)
    }

    fn select(&self, v: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|&i| v[i]).collect()
    }

    /// Predicted frequencies (Hz) for a flat 35-vector.
    pub fn predict_vector(&self, v: &[f64]) -> Vec<f64> {
        let x = self.input_norm.normalize(&self.select(v));
        self.output_norm.denormalize(&self.network.forward(&x))
    }

    pub fn predict(&self, params: &PlateParams) -> Vec<f64> {
        self.predict_vector(&params.to_vector())
    }

    /// `∂f_k / ∂v_i` in Hz per unit parameter, `10 × 35`; columns of
    /// parameters the network ignores are zero.
    pub fn jacobian_vector(&self, v: &[f64]) -> DMatrix<f64> {
        let x = self.input_norm.normalize(&self.select(v));
        let (_, jn) = self.network.forward_jacobian(&x);
        let mut out = DMatrix::zeros(MODE_COUNT, PARAM_DIM);
        for (c, &i) in self.inputs.iter().enumerate() {
            for k in 0..MODE_COUNT {
                out[(k, i)] = self.output_norm.std[k] * jn[(k, c)] / self.input_norm.std[c];
            }
        }
        out
    }

    pub fn jacobian(&self, params: &PlateParams) -> DMatrix<f64> {
        self.jacobian_vector(&params.to_vector())
    }

    /// Whether every parameter lies within ±20% of the reference.
    pub fn in_training_box(&self, params: &PlateParams) -> bool {
        params.to_vector().iter().zip(&self.reference).all(|(v, r)| (v / r - 1.0).abs() <= TRAINING_BOX + 1e-12)
    }

    pub fn r_squared(&self, set: &SampleSet, partition: Partition) -> Result<(Vec<f64>, f64)> {
        let labels = set.outputs(partition);
        let pred: Vec<Vec<f64>> = set.inputs(partition).iter().map(|v| self.predict_vector(v)).collect();
        r_squared(&labels, &pred)
    }

    fn rmse(&self, set: &SampleSet, partition: Partition) -> Vec<f64> {
        let labels = set.outputs(partition);
        let pred: Vec<Vec<f64>> = set.inputs(partition).iter().map(|v| self.predict_vector(v)).collect();
        rmse(&labels, &pred)
    }

    /// Refuses models whose held-out aggregate R² does not exceed the threshold.
    pub fn gate(&self, threshold: f64) -> Result<()> {
        let r2 = self.fit_report.r2_test_aggregate;
        if r2 > threshold {
            Ok(())
        } else {
            Err(Error::GateFailed { r2, threshold })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            version: MODEL_VERSION,
            inputs: self.inputs.clone(),
            activation: self.network.activation,
            w1: nested(&self.network.w1),
            w2: nested(&self.network.w2),
            input_norm: self.input_norm.clone(),
            output_norm: self.output_norm.clone(),
            reference: self.reference.clone(),
            fit_report: self.fit_report.clone(),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            train_config: self.train_config.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::InvalidParams(format!("unsupported model version {}", f.version)));
        }
        let w1 = from_nested(&f.w1)?;
        let w2 = from_nested(&f.w2)?;
        let consistent = w1.ncols() == f.inputs.len() + 1
            && w2.ncols() == w1.nrows() + 1
            && w2.nrows() == MODE_COUNT
            && f.input_norm.mean.len() == f.inputs.len()
            && f.output_norm.mean.len() == MODE_COUNT
            && f.reference.len() == PARAM_DIM
            && f.inputs.iter().all(|&i| i < PARAM_DIM);
        if !consistent {
            return Err(Error::InvalidParams("model file dimensions are inconsistent".into()));
        }
        Ok(Self {
            inputs: f.inputs,
            network: Network { w1, w2, activation: f.activation },
            input_norm: f.input_norm,
            output_norm: f.output_norm,
            reference: f.reference,
            fit_report: f.fit_report,
            dataset_fingerprint: f.dataset_fingerprint,
            train_config: f.train_config,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests;
