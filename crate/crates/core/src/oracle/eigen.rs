//! Lowest eigenpairs of `K x = λ M x` for banded symmetric `K ⪰ 0`, `M ≻ 0`.
//!
//! Lanczos with full reorthogonalization on the shift-inverted operator
//! `(K + σM)⁻¹ M`, which is self-adjoint in the `M` inner product. Known null
//! vectors (rigid-body modes) can be deflated so the iteration never has to
//! resolve the repeated zero eigenvalue.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::banded::BandedSym;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// `M`-normalized eigenvectors matching `values`.
    pub vectors: Vec<Vec<f64>>,
    /// `‖K x − λ M x‖ / ‖λ M x‖` for each pair.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Positive shift `σ`; the factorized matrix is `K + σ M`.
    pub shift: f64,
    /// Convergence bound on the Ritz residual of the inverted operator.
    pub tolerance: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { shift: 1.0, tolerance: 1e-12, max_steps: 400, seed: 0x5eed }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Relative residual `‖K x − λ M x‖ / ‖λ M x‖`; for `λ ≈ 0` the denominator
/// falls back to `σ ‖M x‖`.
pub fn relative_residual(k: &BandedSym, m: &BandedSym, lambda: f64, x: &[f64], shift: f64) -> f64 {
    let n = x.len();
    let mut kx = vec![0.0; n];
    let mut mx = vec![0.0; n];
    k.mul_vec(x, &mut kx);
    m.mul_vec(x, &mut mx);
    let r: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    let scale = lambda.abs().max(shift) * dot(&mx, &mx).sqrt();
    r / scale
}

/// The `count` smallest eigenpairs outside the span of `deflate`.
pub fn lowest_eigenpairs(
    k: &BandedSym,
    m: &BandedSym,
    count: usize,
    deflate: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<EigenPairs> {
    let n = k.dim();
    if count == 0 {
        return Ok(EigenPairs { values: vec![], vectors: vec![], residuals: vec![] });
    }
    if count + deflate.len() > n {
        return Err(Error::EigenSolveFailure(format!("requested {count} modes from a {n}-dimensional space")));
    }
    let factor = k.plus_scaled(opts.shift, m).cholesky()?;

    // M-orthonormal deflation basis, stored with its M-image.
    let mut z: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for v in deflate {
        let mut v = v.clone();
        for _ in 0..2 {
            for (zi, mzi) in &z {
                let c = dot(mzi, &v);
                axpy(-c, zi, &mut v);
            }
        }
        let mut mv = vec![0.0; n];
        m.mul_vec(&v, &mut mv);
        let norm = dot(&v, &mv).sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::MassNotPositive);
        }
        v.iter_mut().for_each(|e| *e /= norm);
        mv.iter_mut().for_each(|e| *e /= norm);
        z.push((v, mv));
    }

    let max_steps = opts.max_steps.min(n - z.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut mq: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let orthogonalize = |w: &mut Vec<f64>, q: &[Vec<f64>], mq: &[Vec<f64>]| {
        for _ in 0..2 {
            for (zi, mzi) in &z {
                let c = dot(mzi, w);
                axpy(-c, zi, w);
            }
            for (qi, mqi) in q.iter().zip(mq) {
                let c = dot(mqi, w);
                axpy(-c, qi, w);
            }
        }
    };

    let mut next: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    orthogonalize(&mut next, &q, &mq);
    let mut converged: Option<(Vec<f64>, DMatrix<f64>)> = None;

    while q.len() < max_steps {
        let mut mnext = vec![0.0; n];
        m.mul_vec(&next, &mut mnext);
        let norm = dot(&next, &mnext).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::EigenSolveFailure("degenerate Lanczos vector".into()));
        }
        next.iter_mut().for_each(|e| *e /= norm);
        mnext.iter_mut().for_each(|e| *e /= norm);
        q.push(std::mem::take(&mut next));
        mq.push(mnext);
        let j = q.len() - 1;

        let mut w = mq[j].clone();
        factor.solve_in_place(&mut w);
        let a = dot(&mq[j], &w);
        alpha.push(a);
        orthogonalize(&mut w, &q, &mq);
        let mut mw = vec![0.0; n];
        m.mul_vec(&w, &mut mw);
        let mut b = dot(&w, &mw).max(0.0).sqrt();
        if b <= 1e-13 * a.abs() {
            // Invariant subspace reached: continue from a fresh direction.
            b = 0.0;
            w = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            orthogonalize(&mut w, &q, &mq);
        }
        beta.push(b);
        next = w;

        let steps = q.len();
        let ready = steps >= count + 4 && (steps.is_multiple_of(4) || steps == max_steps);
        if ready {
            let t = DMatrix::from_fn(steps, steps, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let done = order.iter().take(count).all(|&i| {
                let theta = eig.eigenvalues[i];
                let bound = (b * eig.eigenvectors[(steps - 1, i)]).abs();
                theta > 0.0 && bound <= opts.tolerance * theta
            });
            if done || steps == max_steps {
                let thetas: Vec<f64> = order.iter().take(count).map(|&i| eig.eigenvalues[i]).collect();
                let s = DMatrix::from_fn(steps, count, |r, c| eig.eigenvectors[(r, order[c])]);
                converged = Some((thetas, s));
                if done {
                    break;
                }
            }
        }
    }

    let (thetas, s) = converged.ok_or_else(|| Error::EigenSolveFailure("Lanczos produced no Ritz values".into()))?;
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for (c, theta) in thetas.iter().enumerate() {
        if *theta <= 0.0 {
            return Err(Error::EigenSolveFailure(format!("non-positive Ritz value {theta:e}")));
        }
        let lambda = 1.0 / theta - opts.shift;
        let mut x = vec![0.0; n];
        for (r, qr) in q.iter().enumerate() {
            axpy(s[(r, c)], qr, &mut x);
        }
        residuals.push(relative_residual(k, m, lambda, &x, opts.shift));
        values.push(lambda);
        vectors.push(x);
    }
    Ok(EigenPairs { values, vectors, residuals })
}

/// Dense generalized solve through a Cholesky factor of `M`. Returns all
/// eigenvalues in ascending order. Intended for small problems and tests.
pub fn dense_generalized_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::MassNotPositive)?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::EigenSolveFailure("singular mass factor".into()))?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut values: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Free-free chain of springs with lumped masses plus a weak coupling band.
    fn chain(n: usize) -> (BandedSym, BandedSym) {
        let mut k = BandedSym::zeros(n, 2);
        let mut m = BandedSym::zeros(n, 2);
        for i in 0..n - 1 {
            let s = 1.0 + 0.1 * (i % 3) as f64;
            k.add(i, i, s);
            k.add(i + 1, i + 1, s);
            k.add(i + 1, i, -s);
        }
        for i in 0..n {
            m.add(i, i, 1.0 + 0.05 * (i % 5) as f64);
            if i + 2 < n {
                m.add(i + 2, i, 0.01);
            }
        }
        (k, m)
    }

    #[test]
    fn matches_dense_solver_with_deflated_null_space() {
        let n = 60;
        let (k, m) = chain(n);
        let dense = dense_generalized_eigenvalues(&k.to_dense(), &m.to_dense()).unwrap();
        assert!(dense[0].abs() < 1e-10);
        let ones = vec![vec![1.0; n]];
        let opts = LanczosOptions { shift: 1e-3, ..Default::default() };
        let pairs = lowest_eigenpairs(&k, &m, 6, &ones, &opts).unwrap();
        for (i, v) in pairs.values.iter().enumerate() {
            assert!((v - dense[i + 1]).abs() < 1e-9 * dense[i + 1], "{v} vs {}", dense[i + 1]);
            assert!(pairs.residuals[i] < 1e-8);
        }
    }

    #[test]
    fn without_deflation_finds_zero_mode() {
        let n = 40;
        let (k, m) = chain(n);
        let dense = dense_generalized_eigenvalues(&k.to_dense(), &m.to_dense()).unwrap();
        let opts = LanczosOptions { shift: 1e-2, ..Default::default() };
        let pairs = lowest_eigenpairs(&k, &m, 4, &[], &opts).unwrap();
        assert!(pairs.values[0].abs() < 1e-9);
        for (v, d) in pairs.values.iter().zip(&dense).skip(1) {
            assert!((v - d).abs() < 1e-9 * d);
        }
    }
}
