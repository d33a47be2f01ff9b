use serde::{Deserialize, Serialize};

use super::params::THICKNESS_DIM;
use super::polygon::Point;

/// Eight Gaussian bumps on a 2×4 grid plus a constant floor. The floor is
/// split evenly across the eight basis functions so the field is linear in
/// the coefficients: scaling every coefficient by `k` scales the thickness by `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessBasis {
    pub centers: [Point; THICKNESS_DIM],
    /// Gaussian standard deviation of each bump (m).
    pub radius: f64,
    /// Thickness contributed by the floor when all coefficients are 1 (m).
    pub floor: f64,
    /// Bump heights at unit coefficients (m).
    pub amplitudes: [f64; THICKNESS_DIM],
}

impl ThicknessBasis {
    /// Constant thickness `h`, no bumps.
    pub fn uniform(h: f64) -> Self {
        Self { centers: [[0.0; 2]; THICKNESS_DIM], radius: 1.0, floor: h, amplitudes: [0.0; THICKNESS_DIM] }
    }

    /// Value of basis function `j` at `p`.
    pub fn eval(&self, j: usize, p: Point) -> f64 {
        let share = self.floor / THICKNESS_DIM as f64;
        if self.amplitudes[j] == 0.0 {
            return share;
        }
        let dx = p[0] - self.centers[j][0];
        let dy = p[1] - self.centers[j][1];
        let r2 = (dx * dx + dy * dy) / (self.radius * self.radius);
        share + self.amplitudes[j] * (-0.5 * r2).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessField {
    pub basis: ThicknessBasis,
    pub coefficients: [f64; THICKNESS_DIM],
}

impl ThicknessField {
    pub fn new(basis: ThicknessBasis, coefficients: [f64; THICKNESS_DIM]) -> Self {
        Self { basis, coefficients }
    }

    pub fn uniform(h: f64) -> Self {
        Self::new(ThicknessBasis::uniform(h), [1.0; THICKNESS_DIM])
    }

    /// Thickness (m) at `p`.
    pub fn at(&self, p: Point) -> f64 {
        (0..THICKNESS_DIM).map(|j| self.coefficients[j] * self.basis.eval(j, p)).sum()
    }

    /// The same field with every coefficient multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut c = self.coefficients;
        c.iter_mut().for_each(|v| *v *= k);
        Self::new(self.basis.clone(), c)
    }

    /// Whether the field is spatially constant.
    pub fn is_uniform(&self) -> bool {
        self.basis.amplitudes.iter().zip(&self.coefficients).all(|(a, c)| *a == 0.0 || *c == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_field_is_constant_and_linear() {
        let f = ThicknessField::uniform(3e-3);
        assert!((f.at([0.1, -0.2]) - 3e-3).abs() < 1e-15);
        assert!((f.scaled(2.0).at([0.0, 0.0]) - 6e-3).abs() < 1e-15);
        assert!(f.is_uniform());
    }

    #[test]
    fn linear_in_each_coefficient() {
        let mut basis = ThicknessBasis::uniform(2.5e-3);
        basis.amplitudes = [1e-3; THICKNESS_DIM];
        basis.radius = 0.04;
        for j in 0..THICKNESS_DIM {
            basis.centers[j] = [0.01 * j as f64, -0.02 * j as f64];
        }
        let p = [0.013, -0.05];
        let base = ThicknessField::new(basis.clone(), [1.0; THICKNESS_DIM]);
        for j in 0..THICKNESS_DIM {
            let mut c = [1.0; THICKNESS_DIM];
            c[j] = 3.0;
            let bumped = ThicknessField::new(basis.clone(), c);
            let expected = base.at(p) + 2.0 * basis.eval(j, p);
            assert!((bumped.at(p) - expected).abs() < 1e-15);
        }
        assert!((base.scaled(2.0).at(p) - 2.0 * base.at(p)).abs() < 1e-15);
    }
}
