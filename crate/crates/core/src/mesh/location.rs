use super::{Point3, SurfaceMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    InHeart,
    InTorsoShell,
    Outside,
    OnBoundary,
}

/// Nested surfaces: the heart surface bounds the myocardium and lies strictly
/// inside the torso surface; the shell between them is the passive volume
/// conductor.
#[derive(Debug, Clone)]
pub struct DomainConfig {
    heart: SurfaceMesh,
    torso: SurfaceMesh,
    containment_tolerance: f64,
}

impl DomainConfig {
    pub fn new(heart: SurfaceMesh, torso: SurfaceMesh, containment_tolerance: f64) -> Result<Self> {
        if !(containment_tolerance >= 0.0) {
            return Err(Error::Invalid("containment tolerance must be non-negative".into()));
        }
        for (i, v) in heart.vertices().iter().enumerate() {
            if !inside(&torso, v) {
                return Err(Error::Geometry(format!(
                    "heart vertex {i} is not inside the torso surface"
                )));
            }
        }
        for (i, v) in torso.vertices().iter().enumerate() {
            if inside(&heart, v) {
                return Err(Error::Geometry(format!("torso vertex {i} lies inside the heart")));
            }
        }
        if surfaces_intersect(&heart, &torso) {
            return Err(Error::Geometry("heart and torso surfaces intersect".into()));
        }
        Ok(DomainConfig {
            heart,
            torso,
            containment_tolerance,
        })
    }

    pub fn heart(&self) -> &SurfaceMesh {
        &self.heart
    }

    pub fn torso(&self) -> &SurfaceMesh {
        &self.torso
    }

    pub fn containment_tolerance(&self) -> f64 {
        self.containment_tolerance
    }

    pub fn point_location(&self, x: &Point3) -> Location {
        let tol = self.containment_tolerance;
        if self.heart.distance_to(x) < tol || self.torso.distance_to(x) < tol {
            return Location::OnBoundary;
        }
        if inside(&self.heart, x) {
            Location::InHeart
        } else if inside(&self.torso, x) {
            Location::InTorsoShell
        } else {
            Location::Outside
        }
    }
}

// Generic directions; a ray grazing an edge or vertex is retried along the next.
const RAY_DIRECTIONS: [[f64; 3]; 4] = [
    [0.5773502691896258, 0.5773502691896257, 0.577_350_269_189_626],
    [0.2672612419124244, -0.5345224838248488, 0.8017837257372732],
    [-0.8164965809277261, 0.4082482904638631, 0.408_248_290_463_863],
    [0.1230914909793327, 0.4923659639173309, -0.8616404368553292],
];

/// Ray-crossing parity test: true when `x` is enclosed by `mesh`.
pub fn inside(mesh: &SurfaceMesh, x: &Point3) -> bool {
    for dir in RAY_DIRECTIONS {
        let d = Point3::from(dir);
        if let Some(crossings) = count_crossings(mesh, x, &d) {
            return crossings % 2 == 1;
        }
    }
    // every direction grazed an edge: fall back to the winding number
    winding_number(mesh, x) > 0.5
}

fn count_crossings(mesh: &SurfaceMesh, origin: &Point3, dir: &Point3) -> Option<usize> {
    const EDGE_EPS: f64 = 1e-10;
    let mut count = 0;
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle_points(t);
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        let scale = e1.norm() * e2.norm();
        if det.abs() < 1e-14 * scale {
            // ray parallel to the plane; only a problem if it lies in it
            let n = e1.cross(&e2);
            if (origin - a).dot(&n).abs() < 1e-14 * scale {
                return None;
            }
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        let dist = e2.dot(&q) * inv;
        if dist <= 0.0 || u < -EDGE_EPS || v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
            continue;
        }
        if u < EDGE_EPS || v < EDGE_EPS || u + v > 1.0 - EDGE_EPS {
            return None;
        }
        count += 1;
    }
    Some(count)
}

/// Generalized winding number (sum of signed solid angles over 4 pi).
pub fn winding_number(mesh: &SurfaceMesh, x: &Point3) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle_points(t);
        let (a, b, c) = (a - x, b - x, c - x);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

fn surfaces_intersect(a: &SurfaceMesh, b: &SurfaceMesh) -> bool {
    edges_cross(a, b) || edges_cross(b, a)
}

fn edges_cross(edges_of: &SurfaceMesh, tris_of: &SurfaceMesh) -> bool {
    let boxes: Vec<(Point3, Point3)> = (0..tris_of.triangle_count())
        .map(|t| {
            let [p, q, r] = tris_of.triangle_points(t);
            (p.inf(&q).inf(&r), p.sup(&q).sup(&r))
        })
        .collect();
    for (i, j) in edges_of.edges() {
        let p = edges_of.vertices()[i];
        let q = edges_of.vertices()[j];
        let (lo, hi) = (p.inf(&q), p.sup(&q));
        for (t, (blo, bhi)) in boxes.iter().enumerate() {
            if (0..3).any(|k| hi[k] < blo[k] || lo[k] > bhi[k]) {
                continue;
            }
            let [a, b, c] = tris_of.triangle_points(t);
            if segment_hits_triangle(&p, &q, &a, &b, &c) {
                return true;
            }
        }
    }
    false
}

fn segment_hits_triangle(p: &Point3, q: &Point3, a: &Point3, b: &Point3, c: &Point3) -> bool {
    let dir = q - p;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return false;
    }
    let inv = 1.0 / det;
    let s = p - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = s.cross(&e1);
    let v = dir.dot(&qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = e2.dot(&qv) * inv;
    (0.0..=1.0).contains(&t)
}
