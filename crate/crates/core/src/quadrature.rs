//! Quadrature rules on segments and triangles, with adaptive refinement for
//! nearly singular integrands and a Duffy transform for integrands singular
//! at a triangle corner.

use std::sync::OnceLock;

use crate::mesh::Point3;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

pub(crate) fn gauss_legendre_cached(n: usize) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=24).map(gauss_legendre).collect());
    &rules[n - 1]
}

/// Degree-5, 7-point rule on the reference triangle: `(λ0, λ1, λ2, weight)`
/// with weights summing to one (multiply by the triangle area).
pub const TRIANGLE_7: [(f64, f64, f64, f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_2;
    const T: f64 = 1.0 / 3.0;
    [
        (T, T, T, W0),
        (A1, B1, B1, W1),
        (B1, A1, B1, W1),
        (B1, B1, A1, W1),
        (A2, B2, B2, W2),
        (B2, A2, B2, W2),
        (B2, B2, A2, W2),
    ]
};

/// Ratio of target distance to sub-triangle diameter above which the
/// 7-point rule is used without further refinement.
const FAR_RATIO: f64 = 3.0;
const MAX_DEPTH: u32 = 14;

/// Integrates `f(y) φ_k(y)` over the triangle `p` for the three linear hat
/// functions `φ_k` (`φ_k = 1` at corner `k`). `target` drives the adaptive
/// refinement: sub-triangles close to it relative to their size are split.
pub fn integrate_hats<F>(target: &Point3, p: &[Point3; 3], area: f64, f: &F) -> [f64; 3]
where
    F: Fn(&Point3) -> f64,
{
    let mut out = [0.0; 3];
    triangle_rule(target, p, area, &mut |y, b, w| {
        let v = f(y) * w;
        for k in 0..3 {
            out[k] += v * b[k];
        }
    });
    out
}

/// Visits the points of the adaptive 7-point rule refined towards
/// `target` as `(y, barycentric coordinates, weight)`; the weights sum to
/// the triangle area.
pub fn triangle_rule<V>(target: &Point3, p: &[Point3; 3], area: f64, visit: &mut V)
where
    V: FnMut(&Point3, &[f64; 3], f64),
{
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    refine(target, p, &corners, area, 0, visit);
}

fn refine<V>(target: &Point3, p: &[Point3; 3], bary: &[[f64; 3]; 3], area: f64, depth: u32, visit: &mut V)
where
    V: FnMut(&Point3, &[f64; 3], f64),
{
    let pts: [Point3; 3] = bary.map(|b| p[0] * b[0] + p[1] * b[1] + p[2] * b[2]);
    let centroid = (pts[0] + pts[1] + pts[2]) / 3.0;
    let diam = (pts[0] - pts[1])
        .norm()
        .max((pts[1] - pts[2]).norm())
        .max((pts[2] - pts[0]).norm());
    let dist = (centroid - target).norm();
    if dist >= FAR_RATIO * diam || depth >= MAX_DEPTH {
        for &(l0, l1, l2, w) in &TRIANGLE_7 {
            let b: [f64; 3] = std::array::from_fn(|k| l0 * bary[0][k] + l1 * bary[1][k] + l2 * bary[2][k]);
            let y = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            visit(&y, &b, w * area);
        }
        return;
    }
    let mid = |i: usize, j: usize| -> [f64; 3] { std::array::from_fn(|k| 0.5 * (bary[i][k] + bary[j][k])) };
    let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
    let quarter = area / 4.0;
    for sub in [
        [bary[0], m01, m20],
        [m01, bary[1], m12],
        [m20, m12, bary[2]],
        [m01, m12, m20],
    ] {
        refine(target, p, &sub, quarter, depth + 1, visit);
    }
}

/// Integrates `f(y) φ_k(y)` over a triangle whose corner `singular` is the
/// singular point of `f` (at most `1/|x − y|`), using the Duffy map
/// `y = P + u (A − P) + u v (B − A)` with Jacobian `2·area·u`.
pub fn integrate_hats_duffy<F>(p: &[Point3; 3], singular: usize, area: f64, order: usize, f: &F) -> [f64; 3]
where
    F: Fn(&Point3) -> f64,
{
    let (ia, ib) = ((singular + 1) % 3, (singular + 2) % 3);
    let (ps, pa, pb) = (p[singular], p[ia], p[ib]);
    let rule = gauss_legendre_cached(order);
    let mut out = [0.0; 3];
    for &(u, wu) in rule {
        for &(v, wv) in rule {
            let y = ps + (pa - ps) * u + (pb - pa) * (u * v);
            let jac = 2.0 * area * u;
            let val = f(&y) * jac * wu * wv;
            out[singular] += val * (1.0 - u);
            out[ia] += val * u * (1.0 - v);
            out[ib] += val * u * v;
        }
    }
    out
}
