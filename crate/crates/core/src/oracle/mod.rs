//! Free-boundary flexural modes of a variable-thickness orthotropic plate.
//!
//! Kirchhoff–Love bending, discretized by a Ritz method on a regular grid of
//! tensor cubic B-splines (C², so curvatures are square integrable). Basis
//! functions whose support meets the plate are kept; integrals run over the
//! exact polygonal domain, using tensor Gauss rules on cells fully inside and
//! triangle rules on the clipped polygon of cells cut by the boundary. Free
//! edges are natural boundary conditions of the energy, so no constraint is
//! imposed there.
//!
//! The plate's long axis `y` carries the grain: `d11` multiplies `w_yy²`,
//! `d22` multiplies `w_xx²`.

pub mod banded;
pub mod eigen;
pub mod quadrature;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::polygon::{self, Point};
use crate::geometry::{MaterialParams, PlateGeometry, PlateParams, ReferencePlate};
use banded::BandedSym;
use eigen::{lowest_eigenpairs, LanczosOptions};

pub const MODE_COUNT: usize = 10;
pub const RIGID_MODE_COUNT: usize = 3;
/// Modes below this frequency are classified as rigid-body motion.
pub const RIGID_FREQUENCY_HZ: f64 = 1.0;
pub const MIN_NODES_ACROSS: usize = 40;
/// Grid nodes per metre used unless configured otherwise (6.7 mm knots).
pub const DEFAULT_RESOLUTION: f64 = 150.0;
/// Required relative eigen-residual `‖Kx − λMx‖ / ‖λMx‖`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Basis functions whose integral over the plate falls below this fraction of
/// a full support are dropped; they only add conditioning trouble.
const MIN_SUPPORT_FRACTION: f64 = 1e-10;
const SHIFT_HZ: f64 = 20.0;
const INTERIOR_RULE: usize = 4;
const CUT_RULE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Grid nodes per metre.
    pub resolution: f64,
    /// Boundary polyline samples used when realizing parameters.
    pub boundary_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { resolution: DEFAULT_RESOLUTION, boundary_samples: crate::geometry::DEFAULT_BOUNDARY_SAMPLES }
    }
}

/// Edge treatment. `Clamped` is a penalty on displacement and normal slope
/// along the boundary and exists for testing the rigid-mode bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeCondition {
    #[default]
    Free,
    Clamped,
}

/// Numbering of the active basis functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DofOrdering {
    /// `y` outer, `x` inner; the narrow direction sets the bandwidth.
    #[default]
    RowMajor,
    ColumnMajor,
}

/// Orthotropic bending stiffnesses (N·m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bending {
    /// Along the grain.
    pub d11: f64,
    /// Across the grain.
    pub d22: f64,
    pub d12: f64,
    pub d66: f64,
}

impl Bending {
    pub fn new(m: &MaterialParams, thickness: f64) -> Self {
        Self::with_shear(m, m.shear_lr(), thickness)
    }

    /// Same, with an explicit in-plane shear modulus.
    pub fn with_shear(m: &MaterialParams, shear: f64, thickness: f64) -> Self {
        let denom = 1.0 - m.nu_lr * m.nu_rl();
        let cube = thickness.powi(3) / 12.0;
        Self {
            d11: m.e_long * cube / denom,
            d22: m.e_rad * cube / denom,
            d12: m.nu_lr * m.e_rad * cube / denom,
            d66: shear * cube,
        }
    }

    fn is_positive_definite(&self) -> bool {
        self.d11 > 0.0 && self.d22 > 0.0 && self.d66 > 0.0 && self.d11 * self.d22 > self.d12 * self.d12
    }
}

#[derive(Clone, Copy, Debug)]
struct QuadPoint {
    p: Point,
    weight: f64,
    thickness: f64,
}

#[derive(Clone, Debug)]
struct CellQuadrature {
    cell: [i64; 2],
    points: std::ops::Range<usize>,
}

/// Regular-grid discretization of a plate, ready for assembly.
#[derive(Clone, Debug)]
pub struct DiscretizedPlate {
    /// Knot spacing (m).
    pub spacing: f64,
    pub resolution: f64,
    /// Grid index of each active basis function; its node sits at the centre
    /// of its support, `(index + 2) * spacing`.
    pub node_index: Vec<[i64; 2]>,
    pub nodes: Vec<Point>,
    /// Thickness at each node (m).
    pub thickness: Vec<f64>,
    pub material: MaterialParams,
    /// In-plane shear modulus entering `d66`; defaults to the material's.
    pub shear_modulus: f64,
    pub edge: EdgeCondition,
    /// Lowest basis index and extent of the basis box; `mask` is row-major over it.
    pub mask_origin: [i64; 2],
    pub mask_shape: [usize; 2],
    pub mask: Vec<bool>,
    cells: Vec<CellQuadrature>,
    points: Vec<QuadPoint>,
    boundary: Vec<Point>,
    dof_of: HashMap<[i64; 2], usize>,
}

/// First ten elastic eigenfrequencies (Hz), ascending, plus solver metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalResult {
    pub freqs_hz: Vec<f64>,
    pub resolution: f64,
    #[serde(default)]
    pub dofs: usize,
    #[serde(default)]
    pub rigid_modes: usize,
    #[serde(default)]
    pub max_residual: f64,
}

impl ModalResult {
    pub fn f52(&self) -> f64 {
        self.freqs_hz[4] / self.freqs_hz[1]
    }
}

/// Uniform cubic B-spline pieces on one cell: values, first and second
/// derivatives (per unit of the local coordinate `u ∈ [0, 1]`).
#[inline]
fn cubic_pieces(u: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let v = 1.0 - u;
    let u2 = u * u;
    let u3 = u2 * u;
    let n =
        [v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0];
    let d = [-0.5 * v * v, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2];
    let dd = [v, 3.0 * u - 2.0, -3.0 * u + 1.0, u];
    (n, d, dd)
}

#[derive(Clone, Copy, Default)]
struct LocalBasis {
    n: [f64; 16],
    xx: [f64; 16],
    yy: [f64; 16],
    xy: [f64; 16],
    x: [f64; 16],
    y: [f64; 16],
}

fn local_basis(cell: [i64; 2], p: Point, h: f64) -> LocalBasis {
    let u = p[0] / h - cell[0] as f64;
    let v = p[1] / h - cell[1] as f64;
    let (nx, dx, ddx) = cubic_pieces(u.clamp(0.0, 1.0));
    let (ny, dy, ddy) = cubic_pieces(v.clamp(0.0, 1.0));
    let (ih, ih2) = (1.0 / h, 1.0 / (h * h));
    let mut out = LocalBasis::default();
    for b in 0..4 {
        for a in 0..4 {
            let k = 4 * b + a;
            out.n[k] = nx[a] * ny[b];
            out.x[k] = dx[a] * ny[b] * ih;
            out.y[k] = nx[a] * dy[b] * ih;
            out.xx[k] = ddx[a] * ny[b] * ih2;
            out.yy[k] = nx[a] * ddy[b] * ih2;
            out.xy[k] = dx[a] * dy[b] * ih2;
        }
    }
    out
}

/// Basis grid index of local function `k` in `cell`.
#[inline]
fn basis_of(cell: [i64; 2], k: usize) -> [i64; 2] {
    [cell[0] - 3 + (k % 4) as i64, cell[1] - 3 + (k / 4) as i64]
}

pub fn discretize(geometry: &PlateGeometry, resolution: f64) -> Result<DiscretizedPlate> {
    discretize_with(geometry, resolution, EdgeCondition::Free, DofOrdering::RowMajor)
}

pub fn discretize_with(
    geometry: &PlateGeometry,
    resolution: f64,
    edge: EdgeCondition,
    ordering: DofOrdering,
) -> Result<DiscretizedPlate> {
    let (lo, hi) = geometry.bounding_box();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let across = extent * resolution;
    if resolution.is_nan() || resolution <= 0.0 || across < MIN_NODES_ACROSS as f64 {
        return Err(Error::ResolutionTooCoarse { nodes: across, required: MIN_NODES_ACROSS });
    }
    let h = 1.0 / resolution;
    let boundary = &geometry.boundary;
    let cell_lo = [(lo[0] / h).floor() as i64, (lo[1] / h).floor() as i64];
    let cell_hi = [(hi[0] / h).floor() as i64, (hi[1] / h).floor() as i64];
    let ncx = (cell_hi[0] - cell_lo[0] + 1) as usize;
    let ncy = (cell_hi[1] - cell_lo[1] + 1) as usize;

    // Cells touched by the boundary polyline.
    let mut cut = vec![false; ncx * ncy];
    let n = boundary.len();
    for i in 0..n {
        let a = boundary[i];
        let b = boundary[(i + 1) % n];
        let x0 = ((a[0].min(b[0]) / h).floor() as i64).max(cell_lo[0]);
        let x1 = ((a[0].max(b[0]) / h).floor() as i64).min(cell_hi[0]);
        let y0 = ((a[1].min(b[1]) / h).floor() as i64).max(cell_lo[1]);
        let y1 = ((a[1].max(b[1]) / h).floor() as i64).min(cell_hi[1]);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                cut[(cy - cell_lo[1]) as usize * ncx + (cx - cell_lo[0]) as usize] = true;
            }
        }
    }

    let interior = quadrature::gauss_legendre_unit(INTERIOR_RULE);
    let tri_rule = quadrature::gauss_legendre_unit(CUT_RULE);
    let mut cells = Vec::new();
    let mut points = Vec::new();
    let mut occupied = vec![false; ncx * ncy];
    let mut tri = Vec::new();
    for cy in cell_lo[1]..=cell_hi[1] {
        for cx in cell_lo[0]..=cell_hi[0] {
            let slot = (cy - cell_lo[1]) as usize * ncx + (cx - cell_lo[0]) as usize;
            let x0 = cx as f64 * h;
            let y0 = cy as f64 * h;
            let start = points.len();
            if cut[slot] {
                let piece = polygon::clip_to_rect(boundary, [x0, y0], [x0 + h, y0 + h]);
                if piece.len() < 3 || polygon::signed_area(&piece).abs() < 1e-14 * h * h {
                    continue;
                }
                tri.clear();
                for k in 1..piece.len() - 1 {
                    quadrature::triangle_points(piece[0], piece[k], piece[k + 1], &tri_rule, &mut tri);
                }
                for &(p, w) in &tri {
                    points.push(QuadPoint { p, weight: w, thickness: geometry.thickness_at(p) });
                }
            } else {
                if !polygon::contains(boundary, [x0 + 0.5 * h, y0 + 0.5 * h]) {
                    continue;
                }
                for &(u, wu) in &interior {
                    for &(v, wv) in &interior {
                        let p = [x0 + u * h, y0 + v * h];
                        points.push(QuadPoint { p, weight: wu * wv * h * h, thickness: geometry.thickness_at(p) });
                    }
                }
            }
            occupied[slot] = true;
            cells.push(CellQuadrature { cell: [cx, cy], points: start..points.len() });
        }
    }

    let components = count_components(&occupied, ncx, ncy);
    if components != 1 {
        return Err(Error::DegenerateMask { components });
    }
    if let Some(q) = points.iter().find(|q| q.thickness <= 0.0) {
        return Err(Error::NonPositiveThickness { min_mm: q.thickness * 1e3 });
    }

    // Integral of each basis function over the plate, to decide activity.
    let mask_origin = [cell_lo[0] - 3, cell_lo[1] - 3];
    let mask_shape = [ncx + 3, ncy + 3];
    let mut support = vec![0.0; mask_shape[0] * mask_shape[1]];
    for c in &cells {
        for q in &points[c.points.clone()] {
            let lb = local_basis(c.cell, q.p, h);
            for k in 0..16 {
                let [bi, bj] = basis_of(c.cell, k);
                let s = (bj - mask_origin[1]) as usize * mask_shape[0] + (bi - mask_origin[0]) as usize;
                support[s] += q.weight * lb.n[k];
            }
        }
    }
    let threshold = MIN_SUPPORT_FRACTION * h * h;
    let mask: Vec<bool> = support.iter().map(|s| *s > threshold).collect();

    let mut node_index: Vec<[i64; 2]> = Vec::new();
    for j in 0..mask_shape[1] {
        for i in 0..mask_shape[0] {
            if mask[j * mask_shape[0] + i] {
                node_index.push([mask_origin[0] + i as i64, mask_origin[1] + j as i64]);
            }
        }
    }
    if ordering == DofOrdering::ColumnMajor {
        node_index.sort_by_key(|[i, j]| (*i, *j));
    }
    let dof_of: HashMap<[i64; 2], usize> = node_index.iter().enumerate().map(|(d, ij)| (*ij, d)).collect();
    let nodes: Vec<Point> = node_index.iter().map(|[i, j]| [(*i as f64 + 2.0) * h, (*j as f64 + 2.0) * h]).collect();
    let thickness: Vec<f64> = nodes.iter().map(|&p| geometry.thickness_at(p)).collect();
    let material = geometry.material;
    if !Bending::new(&material, 1.0).is_positive_definite() {
        return Err(Error::InvalidParams("bending stiffness not positive definite".into()));
    }

    Ok(DiscretizedPlate {
        spacing: h,
        resolution,
        node_index,
        nodes,
        thickness,
        material,
        shear_modulus: material.shear_lr(),
        edge,
        mask_origin,
        mask_shape,
        mask,
        cells,
        points,
        boundary: boundary.clone(),
        dof_of,
    })
}

fn count_components(occupied: &[bool], nx: usize, ny: usize) -> usize {
    let mut seen = vec![false; occupied.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..occupied.len() {
        if !occupied[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(s) = stack.pop() {
            let (x, y) = (s % nx, s / nx);
            let mut visit = |t: usize| {
                if occupied[t] && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            };
            if x > 0 {
                visit(s - 1);
            }
            if x + 1 < nx {
                visit(s + 1);
            }
            if y > 0 {
                visit(s - nx);
            }
            if y + 1 < ny {
                visit(s + nx);
            }
        }
    }
    components
}

impl DiscretizedPlate {
    pub fn dofs(&self) -> usize {
        self.node_index.len()
    }

    /// Number of cells carrying quadrature, i.e. meeting the plate.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Bending stiffnesses at the nodes.
    pub fn node_stiffness(&self) -> Vec<Bending> {
        self.thickness.iter().map(|&t| Bending::with_shear(&self.material, self.shear_modulus, t)).collect()
    }

    fn local_dofs(&self, cell: [i64; 2]) -> [Option<usize>; 16] {
        let mut out = [None; 16];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.dof_of.get(&basis_of(cell, k)).copied();
        }
        out
    }

    fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for c in &self.cells {
            let dofs: Vec<usize> = self.local_dofs(c.cell).iter().flatten().copied().collect();
            if let (Some(lo), Some(hi)) = (dofs.iter().min(), dofs.iter().max()) {
                bw = bw.max(hi - lo);
            }
        }
        if self.edge == EdgeCondition::Clamped {
            for p in &self.boundary {
                let cell = self.cell_of(*p);
                let dofs: Vec<usize> = self.local_dofs(cell).iter().flatten().copied().collect();
                if let (Some(lo), Some(hi)) = (dofs.iter().min(), dofs.iter().max()) {
                    bw = bw.max(hi - lo);
                }
            }
        }
        bw
    }

    fn cell_of(&self, p: Point) -> [i64; 2] {
        [(p[0] / self.spacing).floor() as i64, (p[1] / self.spacing).floor() as i64]
    }

    /// Stiffness and consistent mass matrices.
    pub fn assemble(&self) -> (BandedSym, BandedSym) {
        let n = self.dofs();
        let bw = self.bandwidth();
        let mut k = BandedSym::zeros(n, bw);
        let mut m = BandedSym::zeros(n, bw);
        let h = self.spacing;
        let mat = self.material;
        let mut ke = [[0.0; 16]; 16];
        let mut me = [[0.0; 16]; 16];
        for c in &self.cells {
            let dofs = self.local_dofs(c.cell);
            for row in ke.iter_mut().chain(me.iter_mut()) {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            for q in &self.points[c.points.clone()] {
                let lb = local_basis(c.cell, q.p, h);
                let d = Bending::with_shear(&mat, self.shear_modulus, q.thickness);
                let w = q.weight;
                let rho_t = w * mat.rho * q.thickness;
                for a in 0..16 {
                    if dofs[a].is_none() {
                        continue;
                    }
                    let ka_yy = w * (d.d11 * lb.yy[a] + d.d12 * lb.xx[a]);
                    let ka_xx = w * (d.d22 * lb.xx[a] + d.d12 * lb.yy[a]);
                    let ka_xy = w * 4.0 * d.d66 * lb.xy[a];
                    let ma = rho_t * lb.n[a];
                    for b in 0..=a {
                        ke[a][b] += ka_yy * lb.yy[b] + ka_xx * lb.xx[b] + ka_xy * lb.xy[b];
                        me[a][b] += ma * lb.n[b];
                    }
                }
            }
            for a in 0..16 {
                let Some(da) = dofs[a] else { continue };
                for b in 0..=a {
                    let Some(db) = dofs[b] else { continue };
                    k.add(da, db, ke[a][b]);
                    m.add(da, db, me[a][b]);
                }
            }
        }
        if self.edge == EdgeCondition::Clamped {
            self.add_edge_penalty(&mut k);
        }
        (k, m)
    }

    fn add_edge_penalty(&self, k: &mut BandedSym) {
        let h = self.spacing;
        let mean_t = self.thickness.iter().sum::<f64>() / self.thickness.len() as f64;
        let d = Bending::new(&self.material, mean_t).d11;
        let (kw, kn) = (1e2 * d / h.powi(3), 1e2 * d / h);
        let gauss = quadrature::gauss_legendre_unit(2);
        let n = self.boundary.len();
        for i in 0..n {
            let a = self.boundary[i];
            let b = self.boundary[(i + 1) % n];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if len == 0.0 {
                continue;
            }
            let normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            for &(s, w) in &gauss {
                let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let cell = self.cell_of(p);
                let lb = local_basis(cell, p, h);
                let dofs = self.local_dofs(cell);
                for x in 0..16 {
                    let Some(dx) = dofs[x] else { continue };
                    let nx = lb.x[x] * normal[0] + lb.y[x] * normal[1];
                    for (y, dof) in dofs.iter().enumerate().take(x + 1) {
                        let Some(dy) = *dof else { continue };
                        let ny = lb.x[y] * normal[0] + lb.y[y] * normal[1];
                        k.add(dx, dy, w * len * (kw * lb.n[x] * lb.n[y] + kn * nx * ny));
                    }
                }
            }
        }
    }

    /// Coefficient vectors of the rigid motions `1`, `x`, `y`: cubic
    /// B-splines reproduce linear functions with Greville (node) coefficients.
    fn rigid_vectors(&self) -> Vec<Vec<f64>> {
        vec![
            vec![1.0; self.dofs()],
            self.nodes.iter().map(|p| p[0]).collect(),
            self.nodes.iter().map(|p| p[1]).collect(),
        ]
    }

    /// Writes `row col value` lines of the lower triangles of `K` and `M`.
    pub fn dump_matrices<W: Write>(&self, mut out: W) -> Result<()> {
        let (k, m) = self.assemble();
        for (name, a) in [("K", &k), ("M", &m)] {
            writeln!(out, "# {name} {} {}", a.dim(), a.bandwidth())?;
            for i in 0..a.dim() {
                for j in i.saturating_sub(a.bandwidth())..=i {
                    let v = a.get(i, j);
                    if v != 0.0 {
                        writeln!(out, "{i} {j} {v:.17e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn rigid_threshold() -> f64 {
    (2.0 * std::f64::consts::PI * RIGID_FREQUENCY_HZ).powi(2)
}

/// Eigenvalues below the rigid-body threshold, counted by matrix inertia.
pub fn rigid_body_count(plate: &DiscretizedPlate) -> Result<usize> {
    let (k, m) = plate.assemble();
    k.plus_scaled(-rigid_threshold(), &m).negative_eigenvalue_count()
}

fn to_hz(lambda: f64) -> f64 {
    lambda.max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// The ten lowest elastic eigenfrequencies.
pub fn solve_modes(plate: &DiscretizedPlate) -> Result<ModalResult> {
    let (k, m) = plate.assemble();
    if !k.is_symmetric_finite() || !m.is_symmetric_finite() {
        return Err(Error::EigenSolveFailure("non-finite matrix entries".into()));
    }
    if (0..m.dim()).any(|i| m.get(i, i) <= 0.0) {
        return Err(Error::MassNotPositive);
    }
    let rigid = k.plus_scaled(-rigid_threshold(), &m).negative_eigenvalue_count()?;
    let expected = match plate.edge {
        EdgeCondition::Free => RIGID_MODE_COUNT,
        EdgeCondition::Clamped => 0,
    };
    if rigid != expected {
        return Err(Error::RigidModeMismatch { expected, found: rigid });
    }

    let shift = (2.0 * std::f64::consts::PI * SHIFT_HZ).powi(2);
    let deflate = if rigid > 0 { refine_null_space(&k, &m, plate.rigid_vectors(), shift)? } else { Vec::new() };

    // One extra pair brackets the tenth mode for the inertia check below.
    let wanted = MODE_COUNT + 1;
    let mut last_err = None;
    for attempt in 0..3u64 {
        let opts = LanczosOptions { shift, seed: 0x5eed + attempt, ..Default::default() };
        let pairs = lowest_eigenpairs(&k, &m, wanted, &deflate, &opts)?;
        let values = &pairs.values;
        if values[0] < rigid_threshold() {
            last_err = Some(Error::EigenSolveFailure("rigid mode leaked past deflation".into()));
            continue;
        }
        let cut = 0.5 * (values[MODE_COUNT - 1] + values[MODE_COUNT]);
        let below = k.plus_scaled(-cut, &m).negative_eigenvalue_count()?;
        if below != rigid + MODE_COUNT {
            last_err = Some(Error::EigenSolveFailure(format!(
                "inertia reports {below} eigenvalues below the tenth mode, expected {}",
                rigid + MODE_COUNT
            )));
            continue;
        }
        let max_residual = pairs.residuals[..MODE_COUNT].iter().copied().fold(0.0, f64::max);
        if max_residual > RESIDUAL_TOLERANCE {
            return Err(Error::EigenSolveFailure(format!("residual {max_residual:e} above tolerance")));
        }
        let freqs_hz = values[..MODE_COUNT].iter().map(|&l| to_hz(l)).collect();
        return Ok(ModalResult {
            freqs_hz,
            resolution: plate.resolution,
            dofs: plate.dofs(),
            rigid_modes: rigid,
            max_residual,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::EigenSolveFailure("no attempt succeeded".into())))
}

/// Block inverse iteration that turns approximate null vectors into the
/// numerically exact near-null eigenvectors of the assembled pencil.
fn refine_null_space(k: &BandedSym, m: &BandedSym, mut block: Vec<Vec<f64>>, shift: f64) -> Result<Vec<Vec<f64>>> {
    let factor = k.plus_scaled(shift, m).cholesky()?;
    let n = k.dim();
    for _ in 0..6 {
        for v in block.iter_mut() {
            let mut mv = vec![0.0; n];
            m.mul_vec(v, &mut mv);
            factor.solve_in_place(&mut mv);
            *v = mv;
        }
        // M-orthonormalize.
        for i in 0..block.len() {
            for j in 0..i {
                let mut mj = vec![0.0; n];
                m.mul_vec(&block[j], &mut mj);
                let c: f64 = mj.iter().zip(&block[i]).map(|(a, b)| a * b).sum();
                let bj = block[j].clone();
                block[i].iter_mut().zip(&bj).for_each(|(x, y)| *x -= c * y);
            }
            let mut mi = vec![0.0; n];
            m.mul_vec(&block[i], &mut mi);
            let norm: f64 = mi.iter().zip(&block[i]).map(|(a, b)| a * b).sum::<f64>().sqrt();
            if norm.is_nan() || norm <= 0.0 {
                return Err(Error::MassNotPositive);
            }
            block[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(block)
}

/// Realize, discretize and solve in one call.
pub fn evaluate(reference: &ReferencePlate, params: &PlateParams, config: &OracleConfig) -> Result<ModalResult> {
    let geometry = reference.realize_with_density(params, config.boundary_samples)?;
    solve_modes(&discretize(&geometry, config.resolution)?)
}
