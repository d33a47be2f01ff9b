use super::*;
use crate::dataset::{split_indices, DatasetConfig, DatasetMeta, Sample};
use crate::geometry::{perturb, MaterialParams};
use proptest::prelude::*;
use rand::Rng;

fn uniform_rows(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

fn small_cfg(hidden: usize) -> TrainConfig {
    TrainConfig { hidden, ..Default::default() }
}

#[test]
fn linear_target_fits_quickly() {
    let a = [[1.0, -2.0, 0.5, 0.0, 3.0], [0.2, 0.1, -0.4, 1.5, -1.0], [-0.7, 0.0, 0.0, 2.0, 0.3]];
    let c = [0.5, -1.0, 2.0];
    let f = |x: &[f64]| -> Vec<f64> { (0..3).map(|k| c[k] + (0..5).map(|i| a[k][i] * x[i]).sum::<f64>()).collect() };
    let x = uniform_rows(500, 5, -1.0, 1.0, 1);
    let y: Vec<Vec<f64>> = x.iter().map(|r| f(r)).collect();
    let cfg = TrainConfig { max_epochs: 20, ..small_cfg(10) };
    let fit = Regressor::fit(&x[..450], &y[..450], &cfg).unwrap();
    assert!(fit.epochs <= 20);
    let pred: Vec<Vec<f64>> = x[450..].iter().map(|r| fit.predict(r)).collect();
    let (_, r2) = r_squared(&y[450..], &pred).unwrap();
    assert!(r2 > 0.999, "R² = {r2}");
    assert!(fit.accepted_losses.windows(2).all(|w| w[1] < w[0]));
}

/// Plain full-batch gradient descent with momentum on the same architecture,
/// written independently of the trainer.
fn gradient_descent_sine(x: &[f64], y: &[f64], hidden: usize, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r1 = (6.0 / (1 + hidden) as f64).sqrt();
    let r2 = (6.0 / (hidden + 1) as f64).sqrt();
    let mut w: Vec<f64> = (0..hidden).map(|_| rng.random_range(-r1..r1)).collect();
    let mut b = vec![0.0; hidden];
    let mut v: Vec<f64> = (0..hidden).map(|_| rng.random_range(-r2..r2)).collect();
    let mut c = 0.0;
    let params = 3 * hidden + 1;
    let mut momentum = vec![0.0; params];
    let n = x.len() as f64;
    let mut loss = f64::INFINITY;
    for _ in 0..steps {
        let mut g = vec![0.0; params];
        loss = 0.0;
        for (&xs, &ys) in x.iter().zip(y) {
            let a: Vec<f64> = (0..hidden).map(|j| 1.0 / (1.0 + (-(w[j] * xs + b[j])).exp())).collect();
            let p = c + (0..hidden).map(|j| v[j] * a[j]).sum::<f64>();
            let e = p - ys;
            loss += e * e / n;
            for j in 0..hidden {
                let back = 2.0 * e * v[j] * a[j] * (1.0 - a[j]) / n;
                g[j] += back * xs;
                g[hidden + j] += back;
                g[2 * hidden + j] += 2.0 * e * a[j] / n;
            }
            g[3 * hidden] += 2.0 * e / n;
        }
        for (m, gi) in momentum.iter_mut().zip(&g) {
            *m = 0.9 * *m - 0.05 * gi;
        }
        for j in 0..hidden {
            w[j] += momentum[j];
            b[j] += momentum[hidden + j];
            v[j] += momentum[2 * hidden + j];
        }
        c += momentum[3 * hidden];
    }
    loss
}

#[test]
fn sine_fit_reaches_gradient_descent_basin() {
    let n = 500;
    let xs: Vec<f64> =
        (0..n).map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).collect();
    let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let y: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v.sin()]).collect();
    let split = split_indices(n, 5);
    let pick = |idx: &[usize], rows: &[Vec<f64>]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    let fit = Regressor::fit(&pick(&split.train, &x), &pick(&split.train, &y), &small_cfg(10)).unwrap();
    let test_x = pick(&split.test, &x);
    let test_y = pick(&split.test, &y);
    let mse: f64 =
        test_x.iter().zip(&test_y).map(|(a, b)| (fit.predict(a)[0] - b[0]).powi(2)).sum::<f64>() / test_x.len() as f64;
    assert!(mse.sqrt() < 0.01, "test RMSE {}", mse.sqrt());
    assert!(fit.accepted_losses.windows(2).all(|w| w[1] < w[0]));

    // Same loss on raw targets for the baseline, inputs scaled like the trainer.
    let std_x = fit.input_norm.std[0];
    let mean_x = fit.input_norm.mean[0];
    let xn: Vec<f64> = split.train.iter().map(|&i| (xs[i] - mean_x) / std_x).collect();
    let yt: Vec<f64> = split.train.iter().map(|&i| xs[i].sin()).collect();
    let gd = gradient_descent_sine(&xn, &yt, 10, 20000);
    let lm: f64 =
        split.train.iter().map(|&i| (fit.predict(&x[i])[0] - y[i][0]).powi(2)).sum::<f64>() / split.train.len() as f64;
    assert!(gd < 1e-3, "baseline did not converge: {gd}");
    assert!(lm <= gd, "LM {lm} vs GD {gd}");
}

#[test]
fn r_squared_reference_cases() {
    let labels = vec![vec![1.0], vec![2.0], vec![3.0]];
    let (per, agg) = r_squared(&labels, &[vec![1.0], vec![2.0], vec![4.0]]).unwrap();
    assert!((per[0] - 0.5).abs() < 1e-15 && (agg - 0.5).abs() < 1e-15);
    assert_eq!(r_squared(&labels, &labels).unwrap().1, 1.0);
    let mean = vec![vec![2.0]; 3];
    assert_eq!(r_squared(&labels, &mean).unwrap().1, 0.0);
    let flat = vec![vec![1.0, 5.0], vec![2.0, 5.0]];
    assert!(matches!(r_squared(&flat, &flat), Err(Error::DegenerateVariance { output: 1 })));
}

#[test]
fn normalization_round_trip() {
    let rows = uniform_rows(50, 4, -3.0, 700.0, 2);
    let norm = Normalizer::fit(&rows);
    for r in &rows {
        let back = norm.denormalize(&norm.normalize(r));
        for (a, b) in back.iter().zip(r) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

fn random_network(seed: u64, inputs: usize, hidden: usize, outputs: usize, activation: Activation) -> Network {
    let mut net = Network::xavier(inputs, hidden, outputs, activation, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    net.w1.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
    net.w2.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
    net
}

/// Residual Jacobian by central differences, then JᵀJ and Jᵀr densely.
fn explicit_normal_equations(net: &Network, batch: &Batch) -> (DMatrix<f64>, DVector<f64>) {
    let theta = net.to_vec();
    let r0 = forward_batch(net, batch).r;
    let mut jac = DMatrix::zeros(r0.len(), theta.len());
    let h = 1e-6;
    for p in 0..theta.len() {
        let mut tp = theta.clone();
        tp[p] += h;
        let rp = forward_batch(&net.with_weights(&tp), batch).r;
        tp[p] -= 2.0 * h;
        let rm = forward_batch(&net.with_weights(&tp), batch).r;
        for i in 0..r0.len() {
            jac[(i, p)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    let r = DVector::from_vec(r0);
    (jac.transpose() * &jac, jac.transpose() * r)
}

#[test]
fn structured_normal_equations_match_explicit_jacobian() {
    let net = random_network(3, 4, 5, 3, Activation::Sigmoid);
    let rows = uniform_rows(40, 4, -1.5, 1.5, 9);
    let targets = uniform_rows(40, 3, -1.0, 1.0, 10);
    let mut batch = Batch { n: 40, x: Vec::new(), y: Vec::new() };
    for (x, y) in rows.iter().zip(&targets) {
        batch.x.extend(x);
        batch.x.push(1.0);
        batch.y.extend(y);
    }
    let fw = forward_batch(&net, &batch);
    let (jtj, grad) = normal_equations(&net, &batch, &fw);
    let (jtj_ref, grad_ref) = explicit_normal_equations(&net, &batch);
    let scale = jtj_ref.amax();
    assert!((&jtj - &jtj_ref).amax() < 1e-7 * scale, "{}", (&jtj - &jtj_ref).amax());
    assert!((&grad - &grad_ref).amax() < 1e-7 * grad_ref.amax().max(1.0));
}

fn central_difference(net: &Network, x: &[f64], step: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(net.outputs(), net.inputs());
    for i in 0..net.inputs() {
        let mut xp = x.to_vec();
        xp[i] += step;
        let mut xm = x.to_vec();
        xm[i] -= step;
        let (fp, fm) = (net.forward(&xp), net.forward(&xm));
        for k in 0..net.outputs() {
            out[(k, i)] = (fp[k] - fm[k]) / (2.0 * step);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_jacobian_matches_central_differences(seed in 0u64..10_000, x in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let net = random_network(seed, 6, 8, 4, Activation::Sigmoid);
        let (_, analytic) = net.forward_jacobian(&x);
        let numeric = central_difference(&net, &x, 1e-5);
        let scale = analytic.amax().max(1e-12);
        prop_assert!((&analytic - &numeric).amax() < 1e-6 * scale);
    }

    #[test]
    fn identity_activation_is_affine(seed in 0u64..10_000, t in -2.0f64..3.0) {
        let net = random_network(seed, 5, 6, 3, Activation::Identity);
        let x1 = [0.3, -1.0, 2.0, 0.0, 0.7];
        let x2 = [-0.4, 0.5, 1.0, -2.0, 0.1];
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (f1, f2, fm) = (net.forward(&x1), net.forward(&x2), net.forward(&mix));
        for k in 0..3 {
            let expected = t * f1[k] + (1.0 - t) * f2[k];
            prop_assert!((fm[k] - expected).abs() < 1e-10 * (1.0 + expected.abs()));
        }
    }
}

#[test]
fn zero_weights_give_zero_sensitivity() {
    let mut net = random_network(4, 5, 6, 3, Activation::Sigmoid);
    net.w2.row_mut(1).fill(0.0);
    let (_, jac) = net.forward_jacobian(&[0.1, 0.2, -0.3, 0.4, 1.0]);
    assert!(jac.row(1).iter().all(|v| *v == 0.0));
    net.w1.fill(0.0);
    let (_, jac) = net.forward_jacobian(&[0.1, 0.2, -0.3, 0.4, 1.0]);
    assert!(jac.iter().all(|v| *v == 0.0));
}

/// A set whose labels are a smooth synthetic function of the parameters, so
/// model plumbing can be exercised without the oracle.
pub(crate) fn synthetic_set(n: usize) -> SampleSet {
    let base = PlateParams::with_material(MaterialParams::sitka_spruce());
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            let params = perturb(&base, Families::ALL, 0.05, i as u64).unwrap();
            let v = params.to_vector();
            let s: f64 = v[..28].iter().sum::<f64>() / 28.0;
            let c = (v[29] / v[28]).sqrt() / 164.3;
            let freqs_hz = (1..=MODE_COUNT).map(|k| 100.0 * k as f64 * s * c + 5.0 * (v[k] - 1.0)).collect();
            Sample { index: i, params, freqs_hz }
        })
        .collect();
    let meta = DatasetMeta {
        version: crate::dataset::FORMAT_VERSION,
        config: DatasetConfig { n, ..Default::default() },
        component_redraws: 0,
        geometry_rejections: 0,
        oracle_failures: 0,
        split: split_indices(n, 11),
    };
    SampleSet { meta, samples }
}

#[test]
fn model_round_trips_through_json_and_gates() {
    let set = synthetic_set(600);
    let cfg = TrainConfig { hidden: 6, max_epochs: 30, ..Default::default() };
    let model = SurrogateModel::train(&set, &cfg).unwrap();
    assert!(model.fit_report.r2_test_aggregate > 0.99, "{:?}", model.fit_report);
    assert!(model.gate(R2_THRESHOLD).is_ok());
    assert!(matches!(model.gate(0.99999999), Err(Error::GateFailed { .. })));
    assert_eq!(model.dataset_fingerprint, set.fingerprint());

    let back = SurrogateModel::from_json(&model.to_json().unwrap()).unwrap();
    let p = set.samples[3].params;
    assert_eq!(model.predict(&p), back.predict(&p));
    assert_eq!(model.predict(&p), model.predict(&p));

    // Jacobian in physical units against central differences on parameters.
    let v = p.to_vector();
    let jac = model.jacobian_vector(&v);
    for i in [0, 21, 28, 29] {
        let h = 1e-5 * model.input_norm.std[i];
        let (mut vp, mut vm) = (v, v);
        vp[i] += h;
        vm[i] -= h;
        let (fp, fm) = (model.predict_vector(&vp), model.predict_vector(&vm));
        for k in 0..MODE_COUNT {
            let fd = (fp[k] - fm[k]) / (2.0 * h);
            assert!((jac[(k, i)] - fd).abs() <= 1e-6 * jac.amax(), "k={k} i={i}");
        }
    }

    // Training-sample prediction sits at the train-residual scale.
    let s = &set.samples[set.meta.split.train[0]];
    let pred = model.predict(&s.params);
    for ((p, f), rmse) in pred.iter().zip(&s.freqs_hz).zip(&model.fit_report.rmse_train_hz) {
        assert!((p - f).abs() < 5.0 * rmse + 1e-9);
    }
}

#[test]
fn training_box_flag() {
    let set = synthetic_set(300);
    let cfg = TrainConfig { hidden: 4, max_epochs: 5, ..Default::default() };
    let model = SurrogateModel::train(&set, &cfg).unwrap();
    let mut p = PlateParams::with_material(MaterialParams::sitka_spruce());
    assert!(model.in_training_box(&p));
    p.outline.0[0] = 1.3;
    assert!(!model.in_training_box(&p));
}

#[test]
fn undersized_training_set_rejected() {
    let set = synthetic_set(100);
    assert!(matches!(SurrogateModel::train(&set, &TrainConfig::default()), Err(Error::DatasetTooSmall(_))));
    let cfg = TrainConfig { max_epochs: 101, ..Default::default() };
    assert!(SurrogateModel::train(&set, &cfg).is_err());
}

#[test]
fn input_subset_ignores_frozen_families() {
    let set = synthetic_set(400);
    let cfg = TrainConfig { hidden: 4, max_epochs: 5, inputs: Families::GEOMETRY, ..Default::default() };
    let model = SurrogateModel::train(&set, &cfg).unwrap();
    assert_eq!(model.inputs.len(), 28);
    let jac = model.jacobian_vector(&set.samples[0].params.to_vector());
    assert!(jac.columns(28, 7).iter().all(|v| *v == 0.0));
}
