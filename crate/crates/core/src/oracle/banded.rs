//! Symmetric banded matrices, banded Cholesky and inertia counting.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores columns
/// `i - bandwidth ..= i` in ascending order.
#[derive(Clone, Debug)]
pub struct BandedSym {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + self.bandwidth + j - i
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to `(i, j)` and, implicitly, `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// `self + alpha * other`, both with the same shape.
    pub fn plus_scaled(&self, alpha: f64, other: &BandedSym) -> BandedSym {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bandwidth, other.bandwidth);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        BandedSym { n: self.n, bandwidth: self.bandwidth, data }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let b = self.bandwidth;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(b);
            let row = &self.data[i * (b + 1) + b - (i - j0)..i * (b + 1) + b + 1];
            let mut acc = 0.0;
            for (k, a) in row.iter().enumerate() {
                let j = j0 + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    pub fn is_symmetric_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Dense copy, for tests and small cross-checks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Cholesky factor `L` with `A = L Lᵀ`, same band layout.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let b = self.bandwidth;
        let w = b + 1;
        let mut l = self.data.clone();
        for i in 0..self.n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                // Overlap of rows i and j in columns max(j0, j - b) .. j.
                let k0 = j0.max(j.saturating_sub(b));
                let mut sum = l[i * w + b + j - i];
                for k in k0..j {
                    sum -= l[i * w + b + k - i] * l[j * w + b + k - j];
                }
                if j == i {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::EigenSolveFailure(format!(
                            "matrix not positive definite at pivot {i} ({sum:e})"
                        )));
                    }
                    l[i * w + b] = sum.sqrt();
                } else {
                    l[i * w + b + j - i] = sum / l[j * w + b];
                }
            }
        }
        Ok(BandedCholesky { n: self.n, bandwidth: b, data: l })
    }

    /// Counts the negative pivots of an unpivoted `L D Lᵀ` factorization,
    /// which by Sylvester's law equals the number of negative eigenvalues.
    pub fn negative_eigenvalue_count(&self) -> Result<usize> {
        let b = self.bandwidth;
        let w = b + 1;
        let mut l = self.data.clone();
        let mut d = vec![0.0; self.n];
        let mut negative = 0;
        let mut scratch = vec![0.0; w];
        for i in 0..self.n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(b));
                let mut sum = l[i * w + b + j - i];
                for k in k0..j {
                    sum -= scratch[k - j0] * l[j * w + b + k - j];
                }
                if j == i {
                    if sum == 0.0 || !sum.is_finite() {
                        return Err(Error::EigenSolveFailure(format!("zero pivot at {i} in inertia count")));
                    }
                    d[i] = sum;
                    if sum < 0.0 {
                        negative += 1;
                    }
                } else {
                    // scratch holds L[i][k] * d[k]; l holds L[i][k].
                    scratch[j - j0] = sum;
                    l[i * w + b + j - i] = sum / d[j];
                }
            }
        }
        Ok(negative)
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `L Lᵀ x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let b = self.bandwidth;
        let w = b + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(b);
            let row = &self.data[i * w + b + j0 - i..i * w + b];
            let dot: f64 = row.iter().zip(&x[j0..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - dot) / self.data[i * w + b];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.data[i * w + b];
            let xi = x[i];
            let j0 = i.saturating_sub(b);
            let row = &self.data[i * w + b + j0 - i..i * w + b];
            for (v, l) in x[j0..i].iter_mut().zip(row) {
                *v -= l * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize, b: usize) -> BandedSym {
        let mut a = BandedSym::zeros(n, b);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.01);
            for k in 1..=b.min(i) {
                a.add(i, i - k, -1.0 / (k as f64 + 1.0));
            }
        }
        a
    }

    #[test]
    fn cholesky_solve_matches_dense() {
        let a = laplacian_like(40, 5);
        let dense = a.to_dense();
        let rhs: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        a.cholesky().unwrap().solve_in_place(&mut x);
        let mut back = vec![0.0; 40];
        a.mul_vec(&x, &mut back);
        for (u, v) in back.iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-12);
        }
        let dense_x = dense.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(rhs));
        for (u, v) in x.iter().zip(dense_x.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let a = laplacian_like(30, 3);
        let eig = a.to_dense().symmetric_eigen();
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        let shift = 0.5 * (values[6] + values[7]);
        let mut ident = BandedSym::zeros(30, 3);
        for i in 0..30 {
            ident.add(i, i, 1.0);
        }
        let shifted = a.plus_scaled(-shift, &ident);
        assert_eq!(shifted.negative_eigenvalue_count().unwrap(), 7);
    }

    #[test]
    fn indefinite_matrix_rejected_by_cholesky() {
        let mut a = BandedSym::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_err());
    }
}
