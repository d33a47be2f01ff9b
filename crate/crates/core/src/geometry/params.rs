//! The 35 design variables of a plate and their Gaussian perturbation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTLINE_DIM: usize = 20;
pub const THICKNESS_DIM: usize = 8;
pub const MATERIAL_DIM: usize = 7;
pub const PARAM_DIM: usize = OUTLINE_DIM + THICKNESS_DIM + MATERIAL_DIM;

/// Offset of the first thickness coefficient in the flat parameter vector.
pub const THICKNESS_OFFSET: usize = OUTLINE_DIM;
/// Offset of the first material constant in the flat parameter vector.
pub const MATERIAL_OFFSET: usize = OUTLINE_DIM + THICKNESS_DIM;

/// Redraw cap applied per component by [`perturb`].
pub const MAX_REDRAWS: usize = 100;

/// Radial scale of each outline control point about the reference centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutlineParams(pub [f64; OUTLINE_DIM]);

/// Multiplicative scale on each thickness basis coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThicknessParams(pub [f64; THICKNESS_DIM]);

impl OutlineParams {
    pub fn ones() -> Self {
        Self([1.0; OUTLINE_DIM])
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.0.iter().enumerate() {
            if !(p > 0.0 && p < 2.0) {
                return Err(Error::InvalidParams(format!("p[{i}] = {p} outside (0, 2)")));
            }
        }
        Ok(())
    }
}

impl ThicknessParams {
    pub fn ones() -> Self {
        Self([1.0; THICKNESS_DIM])
    }

    pub fn validate(&self) -> Result<()> {
        for (j, &t) in self.0.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidParams(format!("t[{j}] is not finite")));
            }
        }
        Ok(())
    }
}

/// Orthotropic wood constants. The long axis of the plate follows the grain
/// (`e_long`); `e_rad` is the in-plane cross-grain modulus of a quarter-sawn top.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub rho: f64,
    pub e_long: f64,
    pub e_rad: f64,
    pub e_tan: f64,
    pub nu_lr: f64,
    pub nu_lt: f64,
    pub nu_rt: f64,
}

/// Shear-to-modulus ratio `G_LR / E_L` of spruce.
const SPRUCE_SHEAR_RATIO: f64 = 0.064;
/// Cross-grain to grain modulus ratio `E_R / E_L` of spruce.
const SPRUCE_CROSS_RATIO: f64 = 0.078;

impl MaterialParams {
    /// Sitka spruce: 400 kg/m³, 10.8 GPa along the grain, remaining constants
    /// from the usual spruce ratios.
    pub fn sitka_spruce() -> Self {
        let e_long = 10.8e9;
        Self {
            rho: 400.0,
            e_long,
            e_rad: SPRUCE_CROSS_RATIO * e_long,
            e_tan: 0.043 * e_long,
            nu_lr: 0.37,
            nu_lt: 0.47,
            nu_rt: 0.43,
        }
    }

    /// Reciprocal Poisson ratio `nu_rl = nu_lr * e_rad / e_long`.
    pub fn nu_rl(&self) -> f64 {
        self.nu_lr * self.e_rad / self.e_long
    }

    /// In-plane shear modulus used by the bending model: a geometric-mean
    /// estimate `G_LR = k sqrt(E_L E_R)` with `k` fixed so spruce ratios give
    /// `G_LR = 0.064 E_L`.
    pub fn shear_lr(&self) -> f64 {
        let k = SPRUCE_SHEAR_RATIO / SPRUCE_CROSS_RATIO.sqrt();
        k * (self.e_long * self.e_rad).sqrt()
    }

    pub fn to_array(&self) -> [f64; MATERIAL_DIM] {
        [self.rho, self.e_long, self.e_rad, self.e_tan, self.nu_lr, self.nu_lt, self.nu_rt]
    }

    pub fn from_array(a: [f64; MATERIAL_DIM]) -> Self {
        Self { rho: a[0], e_long: a[1], e_rad: a[2], e_tan: a[3], nu_lr: a[4], nu_lt: a[5], nu_rt: a[6] }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        for (i, v) in a.iter().enumerate().take(4) {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("m[{i}] = {v} must be positive")));
            }
        }
        for (i, v) in a.iter().enumerate().skip(4) {
            if !(*v > 0.0 && *v < 0.5) {
                return Err(Error::InvalidParams(format!("m[{i}] = {v} outside (0, 0.5)")));
            }
        }
        if self.nu_lr * self.nu_rl() >= 1.0 {
            return Err(Error::InvalidParams("in-plane stiffness not positive definite (nu_lr * nu_rl >= 1)".into()));
        }
        Ok(())
    }

    fn component_ok(index: usize, value: f64) -> bool {
        if index < 4 {
            value > 0.0 && value.is_finite()
        } else {
            value > 0.0 && value < 0.5
        }
    }
}

/// Full design vector: outline, thickness and material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateParams {
    #[serde(rename = "p")]
    pub outline: OutlineParams,
    #[serde(rename = "t")]
    pub thickness: ThicknessParams,
    #[serde(rename = "m")]
    pub material: MaterialParams,
}

impl PlateParams {
    /// All-ones geometry with the given material.
    pub fn with_material(material: MaterialParams) -> Self {
        Self { outline: OutlineParams::ones(), thickness: ThicknessParams::ones(), material }
    }

    pub fn validate(&self) -> Result<()> {
        self.outline.validate()?;
        self.thickness.validate()?;
        self.material.validate()
    }

    pub fn to_vector(&self) -> [f64; PARAM_DIM] {
        let mut v = [0.0; PARAM_DIM];
        v[..OUTLINE_DIM].copy_from_slice(&self.outline.0);
        v[THICKNESS_OFFSET..MATERIAL_OFFSET].copy_from_slice(&self.thickness.0);
        v[MATERIAL_OFFSET..].copy_from_slice(&self.material.to_array());
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector). Does not validate.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() != PARAM_DIM {
            return Err(Error::InvalidParams(format!("expected {PARAM_DIM} values, got {}", v.len())));
        }
        let mut p = [0.0; OUTLINE_DIM];
        let mut t = [0.0; THICKNESS_DIM];
        let mut m = [0.0; MATERIAL_DIM];
        p.copy_from_slice(&v[..OUTLINE_DIM]);
        t.copy_from_slice(&v[THICKNESS_OFFSET..MATERIAL_OFFSET]);
        m.copy_from_slice(&v[MATERIAL_OFFSET..]);
        Ok(Self { outline: OutlineParams(p), thickness: ThicknessParams(t), material: MaterialParams::from_array(m) })
    }

    /// Names of the flat-vector entries, in order.
    pub fn names() -> Vec<String> {
        let mut names: Vec<String> = (1..=OUTLINE_DIM).map(|i| format!("p{i}")).collect();
        names.extend((1..=THICKNESS_DIM).map(|j| format!("t{j}")));
        names.extend(["rho", "e_long", "e_rad", "e_tan", "nu_lr", "nu_lt", "nu_rt"].iter().map(|s| s.to_string()));
        names
    }
}

/// Selects any combination of the three parameter families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Families {
    #[serde(default)]
    pub outline: bool,
    #[serde(default)]
    pub thickness: bool,
    #[serde(default)]
    pub material: bool,
}

impl Families {
    pub const OUTLINE: Self = Self { outline: true, thickness: false, material: false };
    pub const THICKNESS: Self = Self { outline: false, thickness: true, material: false };
    pub const MATERIAL: Self = Self { outline: false, thickness: false, material: true };
    pub const GEOMETRY: Self = Self { outline: true, thickness: true, material: false };
    pub const ALL: Self = Self { outline: true, thickness: true, material: true };

    /// Indices into the flat 35-vector covered by the selection, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.outline {
            idx.extend(0..OUTLINE_DIM);
        }
        if self.thickness {
            idx.extend(THICKNESS_OFFSET..MATERIAL_OFFSET);
        }
        if self.material {
            idx.extend(MATERIAL_OFFSET..PARAM_DIM);
        }
        idx
    }

    pub fn contains(&self, index: usize) -> bool {
        match index {
            i if i < THICKNESS_OFFSET => self.outline,
            i if i < MATERIAL_OFFSET => self.thickness,
            _ => self.material,
        }
    }

    /// Parses `outline`, `thickness`, `material`, `geometry`, `all`, or a
    /// `+`/`,`-separated combination.
    pub fn parse(s: &str) -> Result<Self> {
        let mut f = Self::default();
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "outline" | "p" => f.outline = true,
                "thickness" | "t" => f.thickness = true,
                "material" | "m" => f.material = true,
                "geometry" => {
                    f.outline = true;
                    f.thickness = true;
                }
                "all" => f = Self::ALL,
                other => return Err(Error::InvalidParams(format!("unknown parameter family '{other}'"))),
            }
        }
        Ok(f)
    }
}

/// Per-family standard deviations of the relative Gaussian perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySigma {
    pub outline: f64,
    pub thickness: f64,
    pub material: f64,
}

impl FamilySigma {
    pub fn uniform(sigma: f64) -> Self {
        Self { outline: sigma, thickness: sigma, material: sigma }
    }

    pub fn for_index(&self, index: usize) -> f64 {
        match index {
            i if i < THICKNESS_OFFSET => self.outline,
            i if i < MATERIAL_OFFSET => self.thickness,
            _ => self.material,
        }
    }
}

fn component_feasible(index: usize, value: f64) -> bool {
    match index {
        i if i < THICKNESS_OFFSET => value > 0.0 && value < 2.0,
        i if i < MATERIAL_OFFSET => value > 0.0,
        i => MaterialParams::component_ok(i - MATERIAL_OFFSET, value),
    }
}

/// Multiplies each selected component by `1 + δ`, `δ ~ N(0, σ²)`, redrawing
/// components that leave their admissible range. Returns the new parameters and
/// the number of redraws performed.
pub fn perturb_with(
    params: &PlateParams,
    which: Families,
    sigma: FamilySigma,
    rng: &mut ChaCha8Rng,
) -> Result<(PlateParams, usize)> {
    let mut v = params.to_vector();
    let mut redraws = 0;
    for i in which.indices() {
        let s = sigma.for_index(i);
        if s < 0.0 || !s.is_finite() {
            return Err(Error::InvalidParams(format!("sigma {s} must be non-negative")));
        }
        if s == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, s).expect("finite positive sigma");
        let base = v[i];
        let mut attempts = 0;
        loop {
            let candidate = base * (1.0 + normal.sample(rng));
            if component_feasible(i, candidate) {
                v[i] = candidate;
                break;
            }
            attempts += 1;
            redraws += 1;
            if attempts >= MAX_REDRAWS {
                return Err(Error::PerturbationInfeasible { component: i, attempts });
            }
        }
    }
    let out = PlateParams::from_vector(&v)?;
    if which.material && out.material.nu_lr * out.material.nu_rl() >= 1.0 {
        return Err(Error::PerturbationInfeasible { component: MATERIAL_OFFSET + 4, attempts: 0 });
    }
    Ok((out, redraws))
}

/// Seeded convenience wrapper around [`perturb_with`].
pub fn perturb(params: &PlateParams, which: Families, sigma: f64, seed: u64) -> Result<PlateParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(params, which, FamilySigma::uniform(sigma), &mut rng).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PlateParams {
        PlateParams::with_material(MaterialParams::sitka_spruce())
    }

    #[test]
    fn zero_sigma_is_identity() {
        let p = reference();
        assert_eq!(perturb(&p, Families::ALL, 0.0, 3).unwrap(), p);
    }

    #[test]
    fn selector_leaves_other_families_untouched() {
        let p = reference();
        let q = perturb(&p, Families::OUTLINE, 0.05, 11).unwrap();
        assert_eq!(q.thickness, p.thickness);
        assert_eq!(q.material, p.material);
        assert_ne!(q.outline, p.outline);
    }

    #[test]
    fn same_seed_same_draws() {
        let p = reference();
        let a = perturb(&p, Families::ALL, 0.1, 42).unwrap();
        let b = perturb(&p, Families::ALL, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let c = perturb(&p, Families::ALL, 0.1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn draw_statistics_match_sigma() {
        let p = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let deltas: Vec<f64> = (0..n)
            .map(|_| {
                let (q, _) = perturb_with(&p, Families::OUTLINE, FamilySigma::uniform(0.05), &mut rng).unwrap();
                q.outline.0[0] - 1.0
            })
            .collect();
        let mean = deltas.iter().sum::<f64>() / n as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((0.048..=0.052).contains(&var.sqrt()), "std {}", var.sqrt());
    }

    #[test]
    fn poisson_ratios_redrawn_into_range() {
        let p = reference();
        for seed in 0..50 {
            let q = perturb(&p, Families::MATERIAL, 0.2, seed).unwrap();
            q.validate().unwrap();
        }
    }

    #[test]
    fn impossible_range_reports_infeasible() {
        let mut p = reference();
        p.material.nu_lt = 0.9;
        let err = perturb(&p, Families::MATERIAL, 1e-9, 1).unwrap_err();
        assert!(matches!(err, Error::PerturbationInfeasible { component, .. } if component == MATERIAL_OFFSET + 5));
    }

    #[test]
    fn vector_round_trip_and_json_shape() {
        let p = perturb(&reference(), Families::ALL, 0.05, 9).unwrap();
        assert_eq!(PlateParams::from_vector(&p.to_vector()).unwrap(), p);
        let json = serde_json::to_value(p).unwrap();
        assert_eq!(json["p"].as_array().unwrap().len(), 20);
        assert_eq!(json["t"].as_array().unwrap().len(), 8);
        assert!(json["m"]["e_long"].is_number());
        let bad = r#"{"p":[1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1],"t":[1,1,1,1,1,1,1,1],
            "m":{"rho":400,"e_long":1e10,"e_rad":1e9,"e_tan":1e9,"nu_lr":0.3,"nu_lt":0.3,"nu_rt":0.3}}"#;
        assert!(serde_json::from_str::<PlateParams>(bad).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!(Families::parse("outline+thickness").unwrap(), Families::GEOMETRY);
        assert_eq!(Families::parse("all").unwrap().indices().len(), PARAM_DIM);
        assert_eq!(Families::THICKNESS.indices(), (20..28).collect::<Vec<_>>());
        assert!(Families::parse("arching").is_err());
    }

    #[test]
    fn shear_modulus_calibration() {
        let m = MaterialParams::sitka_spruce();
        assert!((m.shear_lr() / m.e_long - 0.064).abs() < 1e-6);
    }
}
