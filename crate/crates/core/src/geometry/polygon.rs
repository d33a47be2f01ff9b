//! Planar polygon helpers shared by the geometry and the modal solver.

pub type Point = [f64; 2];

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

pub fn area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

/// Area centroid of a simple polygon.
pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let a = signed_area(poly);
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

pub fn bounding_box(poly: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if d1 == 0.0 && d2 == 0.0 {
        return collinear_overlap(a, b, c, d);
    }
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn collinear_overlap(a: Point, b: Point, c: Point, d: Point) -> bool {
    let axis = if (b[0] - a[0]).abs() >= (b[1] - a[1]).abs() { 0 } else { 1 };
    let (a0, a1) = (a[axis].min(b[axis]), a[axis].max(b[axis]));
    let (c0, c1) = (c[axis].min(d[axis]), c[axis].max(d[axis]));
    a0.max(c0) < a1.min(c1)
}

/// First pair of non-adjacent crossing edges of a closed polyline, if any.
/// Edge `i` joins vertex `i` to vertex `i + 1 (mod n)`.
pub fn first_self_intersection(poly: &[Point]) -> Option<(usize, usize)> {
    let n = poly.len();
    let boxes: Vec<(Point, Point)> = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            ([a[0].min(b[0]), a[1].min(b[1])], [a[0].max(b[0]), a[1].max(b[1])])
        })
        .collect();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (lo_i, hi_i) = boxes[i];
            let (lo_j, hi_j) = boxes[j];
            if lo_i[0] > hi_j[0] || lo_j[0] > hi_i[0] || lo_i[1] > hi_j[1] || lo_j[1] > hi_i[1] {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Even-odd point-in-polygon test.
pub fn contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Sutherland–Hodgman clip of an arbitrary closed polygon against an
/// axis-aligned rectangle. Concave input can yield zero-area bridge edges
/// along the rectangle; signed integration over the result stays exact.
pub fn clip_to_rect(poly: &[Point], lo: Point, hi: Point) -> Vec<Point> {
    let mut out: Vec<Point> = poly.to_vec();
    for (axis, bound, keep_greater) in [(0, lo[0], true), (0, hi[0], false), (1, lo[1], true), (1, hi[1], false)] {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let inside = |p: &Point| if keep_greater { p[axis] >= bound } else { p[axis] <= bound };
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut x = [prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])];
                x[axis] = bound;
                out.push(x);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Horizontal extent (max x − min x) of the polygon's crossings with the line `y = level`.
pub fn horizontal_extent(poly: &[Point], level: f64) -> Option<f64> {
    let n = poly.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > level) != (b[1] > level) {
            let x = a[0] + (level - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (hi > lo).then_some(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    #[test]
    fn square_area_and_centroid() {
        let sq = unit_square();
        assert_eq!(area(&sq), 1.0);
        assert_eq!(centroid(&sq), [0.5, 0.5]);
        let mut cw = sq.clone();
        cw.reverse();
        assert_eq!(signed_area(&cw), -1.0);
    }

    #[test]
    fn bowtie_is_self_intersecting() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(first_self_intersection(&bowtie).is_some());
        assert!(first_self_intersection(&unit_square()).is_none());
    }

    #[test]
    fn clipping_preserves_signed_area() {
        // L-shaped concave polygon clipped by a rectangle crossing the notch.
        let l = vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let clipped = clip_to_rect(&l, [0.5, 0.5], [1.5, 1.5]);
        assert!((signed_area(&clipped) - 0.75).abs() < 1e-12);
        let outside = clip_to_rect(&l, [1.2, 1.2], [1.8, 1.8]);
        assert!(signed_area(&outside).abs() < 1e-12);
    }

    #[test]
    fn point_inside() {
        let sq = unit_square();
        assert!(contains(&sq, [0.5, 0.5]));
        assert!(!contains(&sq, [1.5, 0.5]));
    }

    #[test]
    fn extent_of_square() {
        assert!((horizontal_extent(&unit_square(), 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(horizontal_extent(&unit_square(), 2.0).is_none());
    }
}
