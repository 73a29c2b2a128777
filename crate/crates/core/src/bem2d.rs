//! Piecewise-linear collocation operators on closed plane curves, for the
//! isotropic kernel `−ln r / (2πσ)`. The matrices follow the same layout as
//! the surface operators, so the direct solvers accept them unchanged.

use faer::Mat;
use nalgebra::Vector2;
use rayon::prelude::*;

use crate::bem::check_finite;
use crate::error::{Error, Result};
use crate::mesh::Point3;
use crate::quadrature::gauss_legendre_cached;
use crate::solvers::{ShellOps, SurfaceOps};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const GAUSS_ORDER: usize = 8;
const MAX_PIECES: usize = 64;

/// Counter-clockwise polygon; node `j` joins segment `j − 1` and `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    id: String,
    vertices: Vec<Vector2<f64>>,
}

impl ClosedCurve {
    pub fn new(id: &str, vertices: Vec<Vector2<f64>>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Invalid(format!("curve '{id}' needs at least 3 vertices, got {n}")));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::Invalid(format!("curve '{id}' has a non-finite vertex")));
        }
        let mut twice_area = 0.0;
        let mut shortest = f64::INFINITY;
        for j in 0..n {
            let (a, b) = (vertices[j], vertices[(j + 1) % n]);
            twice_area += a.x * b.y - a.y * b.x;
            shortest = shortest.min((b - a).norm());
        }
        if shortest < 1e-12 {
            return Err(Error::Invalid(format!("curve '{id}' has a degenerate segment")));
        }
        if twice_area <= 0.0 {
            return Err(Error::Invalid(format!("curve '{id}' is not counter-clockwise")));
        }
        Ok(ClosedCurve {
            id: id.to_string(),
            vertices,
        })
    }

    /// Regular `n`-gon inscribed in the circle of `radius` about the origin.
    pub fn circle(id: &str, radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Invalid(format!("circle radius {radius}")));
        }
        let vertices = (0..n)
            .map(|j| {
                let th = TWO_PI * j as f64 / n as f64;
                Vector2::new(radius * th.cos(), radius * th.sin())
            })
            .collect();
        Self::new(id, vertices)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertices as points of the plane `z = 0`.
    pub fn embedded(&self) -> Vec<Point3> {
        self.vertices.iter().map(|v| Point3::new(v.x, v.y, 0.0)).collect()
    }

    fn segment(&self, j: usize) -> (Vector2<f64>, Vector2<f64>) {
        (self.vertices[j], self.vertices[(j + 1) % self.len()])
    }

    /// Outward unit normal of segment `j`.
    fn segment_normal(&self, j: usize) -> Vector2<f64> {
        let (a, b) = self.segment(j);
        let t = (b - a).normalize();
        Vector2::new(t.y, -t.x)
    }

    /// Lumped weights: half the length of both adjacent segments.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        let lengths: Vec<f64> = (0..n).map(|j| (self.segment(j).1 - self.segment(j).0).norm()).collect();
        (0..n).map(|j| 0.5 * (lengths[j] + lengths[(j + n - 1) % n])).collect()
    }

    /// Length-weighted average of the two adjacent segment normals.
    pub fn vertex_normals(&self) -> Vec<Vector2<f64>> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let prev = (j + n - 1) % n;
                let lp = (self.segment(prev).1 - self.segment(prev).0).norm();
                let lj = (self.segment(j).1 - self.segment(j).0).norm();
                (self.segment_normal(prev) * lp + self.segment_normal(j) * lj).normalize()
            })
            .collect()
    }
}

/// Hat integrals of `f` over the segment `a → b` as seen from `x`, with the
/// segment split so every piece is short next to its distance from `x`.
fn segment_hats(x: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>, f: &dyn Fn(&Vector2<f64>) -> f64) -> [f64; 2] {
    let len = (b - a).norm();
    let dist = point_segment_distance(x, a, b).max(1e-300);
    let pieces = ((2.0 * len / dist).ceil() as usize).clamp(1, MAX_PIECES);
    let rule = gauss_legendre_cached(GAUSS_ORDER);
    let h = 1.0 / pieces as f64;
    let mut out = [0.0; 2];
    for p in 0..pieces {
        let s0 = p as f64 * h;
        for &(node, weight) in rule {
            let s = s0 + h * node;
            let w = h * weight * len;
            let v = f(&(a + (b - a) * s)) * w;
            out[0] += (1.0 - s) * v;
            out[1] += s * v;
        }
    }
    out
}

fn point_segment_distance(x: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let s = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * s)).norm()
}

fn green(sigma: f64, x: &Vector2<f64>, y: &Vector2<f64>) -> f64 {
    -(x - y).norm().ln() / (TWO_PI * sigma)
}

fn green_conormal(x: &Vector2<f64>, y: &Vector2<f64>, n_y: &Vector2<f64>) -> f64 {
    let d = x - y;
    n_y.dot(&d) / (TWO_PI * d.norm_squared())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("conductivity {sigma} must be positive")))
    }
}

/// Single and double layer of `curve` collocated at its own vertices; the
/// double-layer diagonal comes from the row-sum identity.
pub fn curve_self_operators(sigma: f64, curve: &ClosedCurve) -> Result<(Mat<f64>, Mat<f64>)> {
    check_sigma(sigma)?;
    let n = curve.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = curve.vertices[i];
            let mut s = vec![0.0; n];
            let mut k = vec![0.0; n];
            for j in 0..n {
                let (a, b) = curve.segment(j);
                let next = (j + 1) % n;
                if j == i || next == i {
                    // log singularity at one end: exact integrals, and the
                    // double layer vanishes on the straight segment
                    let len = (b - a).norm();
                    let near = (-0.5 * len * len.ln() + 0.75 * len) / (TWO_PI * sigma);
                    let far = (-0.5 * len * len.ln() + 0.25 * len) / (TWO_PI * sigma);
                    let (own, other) = if j == i { (j, next) } else { (next, j) };
                    s[own] += near;
                    s[other] += far;
                    continue;
                }
                let normal = curve.segment_normal(j);
                let hs = segment_hats(&x, &a, &b, &|y| green(sigma, &x, y));
                let hk = segment_hats(&x, &a, &b, &|y| green_conormal(&x, y, &normal));
                s[j] += hs[0];
                s[next] += hs[1];
                k[j] += hk[0];
                k[next] += hk[1];
            }
            let off: f64 = k.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
            k[i] = -0.5 - off;
            (s, k)
        })
        .collect();
    to_matrices(rows, n)
}

/// Single and double layer of `curve` at points off the curve.
pub fn curve_pair_operators(sigma: f64, curve: &ClosedCurve, targets: &[Vector2<f64>]) -> Result<(Mat<f64>, Mat<f64>)> {
    check_sigma(sigma)?;
    let n = curve.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = targets
        .par_iter()
        .map(|x| {
            let mut s = vec![0.0; n];
            let mut k = vec![0.0; n];
            for j in 0..n {
                let (a, b) = curve.segment(j);
                let next = (j + 1) % n;
                let normal = curve.segment_normal(j);
                let hs = segment_hats(x, &a, &b, &|y| green(sigma, x, y));
                let hk = segment_hats(x, &a, &b, &|y| green_conormal(x, y, &normal));
                s[j] += hs[0];
                s[next] += hs[1];
                k[j] += hk[0];
                k[next] += hk[1];
            }
            (s, k)
        })
        .collect();
    to_matrices(rows, n)
}

fn to_matrices(rows: Vec<(Vec<f64>, Vec<f64>)>, n: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let s = Mat::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
    let k = Mat::from_fn(rows.len(), n, |i, j| rows[i].1[j]);
    check_finite(&s, "single layer")?;
    check_finite(&k, "double layer")?;
    Ok((s, k))
}

pub fn curve_ops(sigma: f64, curve: &ClosedCurve) -> Result<SurfaceOps> {
    let (s, k) = curve_self_operators(sigma, curve)?;
    Ok(SurfaceOps {
        id: curve.id.clone(),
        s,
        k,
        weights: curve.weights(),
    })
}

/// Operators of the annular region between `heart` (inner) and `torso`.
pub fn annulus_ops(sigma: f64, heart: &ClosedCurve, torso: &ClosedCurve) -> Result<ShellOps> {
    if heart.vertices.iter().any(|v| !winds_around(torso, v)) {
        return Err(Error::Invalid(format!(
            "curve '{}' is not enclosed by '{}'",
            heart.id, torso.id
        )));
    }
    let (s_th, k_th) = curve_pair_operators(sigma, heart, &torso.vertices)?;
    let (s_ht, k_ht) = curve_pair_operators(sigma, torso, &heart.vertices)?;
    Ok(ShellOps {
        heart: curve_ops(sigma, heart)?,
        torso: curve_ops(sigma, torso)?,
        s_th,
        k_th,
        s_ht,
        k_ht,
    })
}

fn winds_around(curve: &ClosedCurve, x: &Vector2<f64>) -> bool {
    let n = curve.len();
    let mut angle = 0.0;
    for j in 0..n {
        let (a, b) = curve.segment(j);
        let (p, q) = (a - x, b - x);
        angle += (p.x * q.y - p.y * q.x).atan2(p.dot(&q));
    }
    angle.abs() > std::f64::consts::PI
}
