//! Reference violin plate and the realization of design parameters as geometry.
//!
//! The outline is a closed cubic spline through 20 control points; each outline
//! parameter scales the distance of its control point from the reference
//! centroid. Thickness is a floor plus eight Gaussian bumps whose coefficients
//! are scaled by the thickness parameters. Coordinates are metres, with the long
//! axis (and the wood grain) along `y` and the lower bout at negative `y`.

pub mod params;
pub mod polygon;
pub mod spline;
pub mod thickness;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use params::{
    perturb, perturb_with, Families, FamilySigma, MaterialParams, OutlineParams, PlateParams, ThicknessParams,
    MATERIAL_DIM, MATERIAL_OFFSET, OUTLINE_DIM, PARAM_DIM, THICKNESS_DIM, THICKNESS_OFFSET,
};
use polygon::Point;
use spline::PeriodicSpline;
pub use thickness::{ThicknessBasis, ThicknessField};

/// Boundary samples used when no density is requested.
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 256;

/// Body proportions of the synthetic reference (m).
pub const BODY_LENGTH: f64 = 0.356;
pub const UPPER_BOUT: f64 = 0.168;
pub const MIDDLE_BOUT: f64 = 0.112;
pub const LOWER_BOUT: f64 = 0.208;

const FLOOR_THICKNESS: f64 = 2.5e-3;
const CENTER_THICKNESS: f64 = 3.5e-3;
const BUMP_RADIUS: f64 = 0.040;
const BUMP_COLUMN_OFFSET: f64 = 0.035;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePlate {
    pub control_points: Vec<Point>,
    pub centroid: Point,
    pub thickness: ThicknessBasis,
    pub material: MaterialParams,
    /// `y` levels of the lower, middle and upper bouts.
    pub bout_levels: [f64; 3],
}

/// Half-width of the silhouette at normalized height `s ∈ [-1, 1]` (m).
fn silhouette_half_width(s: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((s - c) / w).powi(2)).exp();
    let mm = 54.6 + 61.1 * bump(-0.47, 0.3) + 47.7 * bump(0.598, 0.22);
    let end = (1.0 - s * s).max(0.0).sqrt();
    1e-3 * mm * end
}

/// Dense counter-clockwise silhouette polyline starting at the lower end.
fn silhouette(points_per_side: usize) -> Vec<Point> {
    let half = 0.5 * BODY_LENGTH;
    let mut right = Vec::with_capacity(points_per_side);
    for k in 0..points_per_side {
        let phi = std::f64::consts::PI * k as f64 / points_per_side as f64;
        let s = -phi.cos();
        right.push([silhouette_half_width(s), half * s]);
    }
    let mut out = right.clone();
    out.push([0.0, half]);
    out.extend(right.iter().skip(1).rev().map(|p| [-p[0], p[1]]));
    out
}

/// Control points at equal arc-length stations of the silhouette.
fn stations_on(path: &[Point], count: usize) -> Vec<Point> {
    let n = path.len();
    let mut cumulative = vec![0.0; n + 1];
    for i in 0..n {
        let a = path[i];
        let b = path[(i + 1) % n];
        cumulative[i + 1] = cumulative[i] + ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    }
    let total = cumulative[n];
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let target = total * k as f64 / count as f64;
        while cumulative[seg + 1] < target {
            seg += 1;
        }
        let a = path[seg];
        let b = path[(seg + 1) % n];
        let len = cumulative[seg + 1] - cumulative[seg];
        let u = if len > 0.0 { (target - cumulative[seg]) / len } else { 0.0 };
        out.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
    }
    out
}

impl ReferencePlate {
    /// Synthetic full-size violin top: 356 mm body, bouts 168/112/208 mm,
    /// thickness 3.5 mm at the centre thinning to about 2.6 mm at the rim, spruce.
    pub fn violin() -> Self {
        let control_points = stations_on(&silhouette(4000), OUTLINE_DIM);
        let spline = PeriodicSpline::through(&control_points);
        let dense = spline.sample(4096);
        let centroid = polygon::centroid(&dense);

        let quarter = 0.25 * BODY_LENGTH;
        let mut centers = [[0.0; 2]; THICKNESS_DIM];
        for row in 0..4 {
            let y = centroid[1] + quarter * (row as f64 - 1.5);
            centers[2 * row] = [centroid[0] - BUMP_COLUMN_OFFSET, y];
            centers[2 * row + 1] = [centroid[0] + BUMP_COLUMN_OFFSET, y];
        }
        let mut basis =
            ThicknessBasis { centers, radius: BUMP_RADIUS, floor: FLOOR_THICKNESS, amplitudes: [1.0; THICKNESS_DIM] };
        let shape_at_center: f64 =
            (0..THICKNESS_DIM).map(|j| basis.eval(j, centroid) - FLOOR_THICKNESS / THICKNESS_DIM as f64).sum();
        let amp = (CENTER_THICKNESS - FLOOR_THICKNESS) / shape_at_center;
        basis.amplitudes = [amp; THICKNESS_DIM];

        let bout_levels = find_bout_levels(&dense);
        Self { control_points, centroid, thickness: basis, material: MaterialParams::sitka_spruce(), bout_levels }
    }

    /// All-ones parameters with the reference material.
    pub fn params(&self) -> PlateParams {
        PlateParams::with_material(self.material)
    }

    pub fn realize(&self, params: &PlateParams) -> Result<PlateGeometry> {
        self.realize_with_density(params, DEFAULT_BOUNDARY_SAMPLES)
    }

    /// Scales each control point radially about the centroid, rebuilds the
    /// spline and samples `density` boundary points.
    pub fn realize_with_density(&self, params: &PlateParams, density: usize) -> Result<PlateGeometry> {
        params.validate()?;
        if density < OUTLINE_DIM {
            return Err(Error::InvalidParams(format!("boundary density {density} below {OUTLINE_DIM}")));
        }
        let c = self.centroid;
        let control_points: Vec<Point> = self
            .control_points
            .iter()
            .zip(params.outline.0.iter())
            .map(|(p, s)| [c[0] + s * (p[0] - c[0]), c[1] + s * (p[1] - c[1])])
            .collect();
        let spline = PeriodicSpline::through(&control_points);
        let boundary = spline.sample(density);
        let thickness = ThicknessField::new(self.thickness.clone(), params.thickness.0);
        PlateGeometry::new(boundary, control_points, thickness, params.material)
    }
}

fn find_bout_levels(boundary: &[Point]) -> [f64; 3] {
    let (lo, hi) = polygon::bounding_box(boundary);
    let steps = 400;
    let levels: Vec<(f64, f64)> = (1..steps)
        .map(|k| lo[1] + (hi[1] - lo[1]) * k as f64 / steps as f64)
        .filter_map(|y| polygon::horizontal_extent(boundary, y).map(|w| (y, w)))
        .collect();
    let span = hi[1] - lo[1];
    let lower = levels
        .iter()
        .filter(|(y, _)| *y < lo[1] + 0.5 * span)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|l| l.0)
        .unwrap_or(lo[1] + 0.25 * span);
    let upper = levels
        .iter()
        .filter(|(y, _)| *y > lo[1] + 0.6 * span)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|l| l.0)
        .unwrap_or(lo[1] + 0.8 * span);
    let middle = levels
        .iter()
        .filter(|(y, _)| *y > lower && *y < upper)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|l| l.0)
        .unwrap_or(0.5 * (lower + upper));
    [lower, middle, upper]
}

/// A concrete plate: sampled boundary, thickness field and material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateGeometry {
    pub boundary: Vec<Point>,
    pub control_points: Vec<Point>,
    pub thickness: ThicknessField,
    pub material: MaterialParams,
    area: f64,
}

impl PlateGeometry {
    /// Validates a counter-clockwise simple boundary with positive thickness.
    pub fn new(
        boundary: Vec<Point>,
        control_points: Vec<Point>,
        thickness: ThicknessField,
        material: MaterialParams,
    ) -> Result<Self> {
        if boundary.len() < 3 {
            return Err(Error::InvalidParams("boundary needs at least 3 points".into()));
        }
        if let Some((first, second)) = polygon::first_self_intersection(&boundary) {
            return Err(Error::SelfIntersectingOutline { first, second });
        }
        let signed = polygon::signed_area(&boundary);
        if signed <= 0.0 {
            // Clockwise or zero-area loop.
            return Err(Error::SelfIntersectingOutline { first: 0, second: 0 });
        }
        let geometry = Self { boundary, control_points, thickness, material, area: signed };
        let min = geometry.min_thickness();
        if min <= 0.0 {
            return Err(Error::NonPositiveThickness { min_mm: min * 1e3 });
        }
        Ok(geometry)
    }

    /// Plate with an arbitrary polygonal boundary (used for test plates).
    pub fn from_polygon(boundary: Vec<Point>, thickness: ThicknessField, material: MaterialParams) -> Result<Self> {
        Self::new(boundary, Vec::new(), thickness, material)
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn thickness_at(&self, p: Point) -> f64 {
        self.thickness.at(p)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        polygon::bounding_box(&self.boundary)
    }

    pub fn contains(&self, p: Point) -> bool {
        polygon::contains(&self.boundary, p)
    }

    /// Smallest thickness over the boundary and a 48×48 interior sample grid.
    pub fn min_thickness(&self) -> f64 {
        let mut min = self.boundary.iter().map(|&p| self.thickness.at(p)).fold(f64::INFINITY, f64::min);
        if self.thickness.is_uniform() {
            return min;
        }
        let (lo, hi) = self.bounding_box();
        let n = 48;
        for i in 0..=n {
            for j in 0..=n {
                let p = [lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64, lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64];
                if self.contains(p) {
                    min = min.min(self.thickness.at(p));
                }
            }
        }
        min
    }

    /// Mean horizontal extent at the given bout levels.
    pub fn mean_width(&self, levels: &[f64]) -> f64 {
        let widths: Vec<f64> = levels.iter().filter_map(|&y| polygon::horizontal_extent(&self.boundary, y)).collect();
        if widths.is_empty() {
            0.0
        } else {
            widths.iter().sum::<f64>() / widths.len() as f64
        }
    }

    /// Boundary and a thickness raster for plotting. Cells outside the
    /// outline carry `None`.
    pub fn export(&self, grid: usize) -> GeometryExport {
        let (lo, hi) = self.bounding_box();
        let grid = grid.max(2);
        let dx = (hi[0] - lo[0]) / (grid - 1) as f64;
        let dy = (hi[1] - lo[1]) / (grid - 1) as f64;
        let mut values = Vec::with_capacity(grid * grid);
        for j in 0..grid {
            for i in 0..grid {
                let p = [lo[0] + dx * i as f64, lo[1] + dy * j as f64];
                values.push(self.contains(p).then(|| self.thickness.at(p)));
            }
        }
        GeometryExport {
            boundary: self.boundary.clone(),
            control_points: self.control_points.clone(),
            area: self.area,
            thickness: ThicknessRaster { origin: lo, dx, dy, nx: grid, ny: grid, values },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRaster {
    pub origin: Point,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`y` outer) thickness in metres.
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryExport {
    pub boundary: Vec<Point>,
    pub control_points: Vec<Point>,
    pub area: f64,
    pub thickness: ThicknessRaster,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outline_scaled(k: f64) -> PlateParams {
        let mut p = ReferencePlate::violin().params();
        p.outline = OutlineParams([k; OUTLINE_DIM]);
        p
    }

    #[test]
    fn reference_proportions() {
        let r = ReferencePlate::violin();
        let g = r.realize(&r.params()).unwrap();
        let (lo, hi) = g.bounding_box();
        let length = hi[1] - lo[1];
        assert!((length - BODY_LENGTH).abs() < 0.01, "length {length}");
        let widths: Vec<f64> =
            r.bout_levels.iter().map(|&y| polygon::horizontal_extent(&g.boundary, y).unwrap()).collect();
        assert!((widths[0] - LOWER_BOUT).abs() < 0.012, "lower {}", widths[0]);
        assert!((widths[1] - MIDDLE_BOUT).abs() < 0.012, "middle {}", widths[1]);
        assert!((widths[2] - UPPER_BOUT).abs() < 0.012, "upper {}", widths[2]);
    }

    #[test]
    fn identity_reproduces_control_points() {
        let r = ReferencePlate::violin();
        let g = r.realize(&r.params()).unwrap();
        let spline = PeriodicSpline::through(&g.control_points);
        for (i, p) in r.control_points.iter().enumerate() {
            let q = spline.eval(i as f64);
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_thickness_range() {
        let r = ReferencePlate::violin();
        let g = r.realize(&r.params()).unwrap();
        assert!((g.thickness_at(r.centroid) - CENTER_THICKNESS).abs() < 1e-12);
        let raster = g.export(64);
        for v in raster.thickness.values.iter().flatten() {
            assert!((2.0e-3..=5.0e-3).contains(v), "thickness {v}");
        }
        let rim = g.boundary.iter().map(|&p| g.thickness_at(p)).fold(f64::INFINITY, f64::min);
        assert!(rim < 2.8e-3);
    }

    #[test]
    fn uniform_radial_scale_scales_area_quadratically() {
        let r = ReferencePlate::violin();
        let a0 = r.realize(&r.params()).unwrap().area();
        let a11 = r.realize(&outline_scaled(1.1)).unwrap().area();
        let a105 = r.realize(&outline_scaled(1.05)).unwrap().area();
        assert!((a11 / a0 - 1.21).abs() < 1e-9);
        assert!((a105 / a0 - 1.1025).abs() < 1e-3);
    }

    #[test]
    fn shrinking_one_point_reduces_area() {
        let r = ReferencePlate::violin();
        let a0 = r.realize(&r.params()).unwrap().area();
        let mut p = r.params();
        p.outline.0[4] = 0.8;
        let g = r.realize(&p).unwrap();
        // Independent shoelace on a much denser sampling of the same spline.
        let dense = PeriodicSpline::through(&g.control_points).sample(20_000);
        let oracle = polygon::area(&dense);
        assert!(g.area() < a0);
        assert!((g.area() - oracle).abs() / oracle < 1e-3);
    }

    #[test]
    fn area_self_converges() {
        let r = ReferencePlate::violin();
        let a256 = r.realize_with_density(&r.params(), 256).unwrap().area();
        let a1024 = r.realize_with_density(&r.params(), 1024).unwrap().area();
        assert!((a256 - a1024).abs() / a1024 < 1e-3);
    }

    #[test]
    fn inverted_control_point_self_intersects() {
        let r = ReferencePlate::violin();
        let mut p = r.params();
        p.outline.0[4] = 0.05;
        p.outline.0[5] = 1.99;
        p.outline.0[6] = 0.05;
        assert!(matches!(r.realize(&p), Err(Error::SelfIntersectingOutline { .. })));
    }

    #[test]
    fn negative_coefficient_gives_non_positive_thickness() {
        let r = ReferencePlate::violin();
        let mut p = r.params();
        p.thickness.0 = [-1.0; THICKNESS_DIM];
        assert!(matches!(r.realize(&p), Err(Error::NonPositiveThickness { .. })));
    }

    #[test]
    fn doubling_coefficients_doubles_thickness() {
        let r = ReferencePlate::violin();
        let g1 = r.realize(&r.params()).unwrap();
        let mut p = r.params();
        p.thickness.0 = [2.0; THICKNESS_DIM];
        let g2 = r.realize(&p).unwrap();
        for pt in [[0.0, 0.0], [0.05, 0.1], [-0.07, -0.09]] {
            assert!((g2.thickness_at(pt) - 2.0 * g1.thickness_at(pt)).abs() < 1e-15);
        }
    }

    #[test]
    fn export_contains_boundary() {
        let r = ReferencePlate::violin();
        let g = r.realize_with_density(&r.params(), 64).unwrap();
        let e = g.export(16);
        assert_eq!(e.boundary.len(), 64);
        assert_eq!(e.thickness.values.len(), 256);
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"boundary\""));
    }
}
