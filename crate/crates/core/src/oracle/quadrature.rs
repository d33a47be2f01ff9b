use crate::geometry::polygon::Point;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Collapsed (Duffy) tensor rule on a triangle. Weights carry the signed area,
/// so summing over a fan of a clockwise loop subtracts.
pub fn triangle_points(a: Point, b: Point, c: Point, rule: &[(f64, f64)], out: &mut Vec<(Point, f64)>) {
    let twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if twice_area == 0.0 {
        return;
    }
    for &(u, wu) in rule {
        for &(v, wv) in rule {
            let p = [
                a[0] + u * ((1.0 - v) * (b[0] - a[0]) + v * (c[0] - a[0])),
                a[1] + u * ((1.0 - v) * (b[1] - a[1]) + v * (c[1] - a[1])),
            ];
            out.push((p, wu * wv * u * twice_area));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let rule = gauss_legendre_unit(n);
            for deg in 0..(2 * n) {
                let s: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_for_monomials() {
        let rule = gauss_legendre_unit(5);
        let mut pts = Vec::new();
        triangle_points([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], &rule, &mut pts);
        // ∫ x^a y^b over the unit simplex = a! b! / (a + b + 2)!
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        for a in 0..5u32 {
            for b in 0..(8 - a) {
                let s: f64 = pts.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((s - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
        pts.clear();
        triangle_points([0.0, 0.0], [0.0, 1.0], [1.0, 0.0], &rule, &mut pts);
        let s: f64 = pts.iter().map(|(_, w)| w).sum();
        assert!((s + 0.5).abs() < 1e-14);
    }
}
