//! Closed (periodic) cubic interpolating spline with uniform knot spacing.

use nalgebra::{DMatrix, DVector};

use super::polygon::Point;

#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    points: Vec<Point>,
    /// Second derivatives with respect to the knot parameter at each knot.
    curvature: Vec<Point>,
}

impl PeriodicSpline {
    /// Interpolates `points` at parameters `0, 1, .., n-1`, wrapping to `n ≡ 0`.
    pub fn through(points: &[Point]) -> Self {
        let n = points.len();
        assert!(n >= 3, "a closed spline needs at least three points");
        // Cyclic system M[i-1] + 4 M[i] + M[i+1] = 6 (P[i+1] - 2 P[i] + P[i-1]).
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0;
            a[(i, (i + 1) % n)] += 1.0;
            a[(i, (i + n - 1) % n)] += 1.0;
        }
        let lu = a.lu();
        let mut curvature = vec![[0.0; 2]; n];
        for k in 0..2 {
            let rhs = DVector::from_fn(n, |i, _| {
                6.0 * (points[(i + 1) % n][k] - 2.0 * points[i][k] + points[(i + n - 1) % n][k])
            });
            let sol = lu.solve(&rhs).expect("cyclic spline system is diagonally dominant");
            for i in 0..n {
                curvature[i][k] = sol[i];
            }
        }
        Self { points: points.to_vec(), curvature }
    }

    pub fn knots(&self) -> usize {
        self.points.len()
    }

    /// Point at parameter `s`; `s` is taken modulo the knot count.
    pub fn eval(&self, s: f64) -> Point {
        let n = self.points.len();
        let s = s.rem_euclid(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let u = s - i as f64;
        let j = (i + 1) % n;
        let v = 1.0 - u;
        let cu = (v * v * v - v) / 6.0;
        let cv = (u * u * u - u) / 6.0;
        std::array::from_fn(|k| {
            v * self.points[i][k] + u * self.points[j][k] + cu * self.curvature[i][k] + cv * self.curvature[j][k]
        })
    }

    /// `count` points at uniform parameter spacing, starting at knot 0.
    pub fn sample(&self, count: usize) -> Vec<Point> {
        let n = self.points.len() as f64;
        (0..count).map(|k| self.eval(n * k as f64 / count as f64)).collect()
    }
}
