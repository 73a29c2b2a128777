//! Closed triangulated surfaces bounding the heart and torso domains.
//!
//! Lengths are in cm. Every [`SurfaceMesh`] is watertight, consistently
//! oriented with outward normals and free of degenerate triangles; the
//! constructor enforces this and recomputes normals and areas from the
//! vertex coordinates.

mod io;
mod location;
pub mod primitives;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use io::{load_mesh, mesh_to_off, mesh_to_vtk, save_mesh_json, MeshFormat};
pub use location::{inside, winding_number, DomainConfig, Location};

pub type Point3 = Vector3<f64>;

/// Minimum altitude relative to the bounding-box diagonal below which a
/// triangle counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Point3>,
    areas: Vec<f64>,
    surface_id: String,
}

impl SurfaceMesh {
    /// Builds a mesh and checks watertightness, orientation and degeneracy.
    ///
    /// A consistently oriented mesh with inward normals is flipped globally.
    /// A mesh whose triangles disagree on orientation is rejected.
    pub fn new(
        vertices: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        surface_id: impl Into<String>,
    ) -> Result<Self> {
        let surface_id = surface_id.into();
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::Geometry(format!("surface '{surface_id}' is empty")));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Geometry(format!("non-finite vertex {v:?}")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Geometry(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Geometry(format!("triangle {t} repeats a vertex")));
            }
        }
        check_edges(&triangles)?;

        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            normals: Vec::new(),
            areas: Vec::new(),
            surface_id,
        };
        mesh.check_degeneracy()?;
        if mesh.signed_volume() < 0.0 {
            for tri in &mut mesh.triangles {
                tri.swap(1, 2);
            }
        }
        mesh.recompute_geometry();
        if mesh.signed_volume() <= 0.0 {
            return Err(Error::Geometry("enclosed volume is not positive".into()));
        }
        Ok(mesh)
    }

    fn recompute_geometry(&mut self) {
        let (normals, areas) = self
            .triangles
            .iter()
            .map(|&[a, b, c]| {
                let cross =
                    (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
                let norm = cross.norm();
                (cross / norm, 0.5 * norm)
            })
            .unzip();
        self.normals = normals;
        self.areas = areas;
    }

    fn check_degeneracy(&self) -> Result<()> {
        let diag = self.bbox_diagonal();
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let p = [self.vertices[a], self.vertices[b], self.vertices[c]];
            let double_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
            let longest = (0..3)
                .map(|k| (p[(k + 1) % 3] - p[k]).norm())
                .fold(0.0, f64::max);
            let altitude = if longest > 0.0 { double_area / longest } else { 0.0 };
            if !(altitude > DEGENERACY_RATIO * diag) {
                return Err(Error::Geometry(format!(
                    "triangle {t} is degenerate (altitude {altitude:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Point3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn surface_id(&self) -> &str {
        &self.surface_id
    }

    pub fn with_surface_id(mut self, id: impl Into<String>) -> Self {
        self.surface_id = id.into();
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Divergence-theorem volume; positive iff normals point outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    /// Lumped (area-weighted) quadrature weight of each vertex: one third of
    /// the area of every incident triangle. `sum(w_i * u_i)` approximates the
    /// surface integral of a piecewise-linear field.
    pub fn vertex_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        for (tri, area) in self.triangles.iter().zip(&self.areas) {
            for &v in tri {
                w[v] += area / 3.0;
            }
        }
        w
    }

    /// Area-weighted vertex normals, normalized.
    pub fn vertex_normals(&self) -> Vec<Point3> {
        let mut n = vec![Point3::zeros(); self.vertices.len()];
        for ((tri, normal), area) in self.triangles.iter().zip(&self.normals).zip(&self.areas) {
            for &v in tri {
                n[v] += normal * *area;
            }
        }
        n.iter_mut().for_each(|v| *v = v.normalize());
        n
    }

    pub fn bbox(&self) -> (Point3, Point3) {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Longest edge length over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .fold(0.0, f64::max)
    }

    /// Undirected edges, each listed once with `a < b`, in sorted order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// The same surface with every triangle wound the other way.
    ///
    /// The result has inward normals, so it bypasses validation; it exists
    /// for orientation checks and for building the exterior side of a shell.
    pub fn flipped(&self) -> SurfaceMesh {
        let mut m = self.clone();
        for tri in &mut m.triangles {
            tri.swap(1, 2);
        }
        m.recompute_geometry();
        m
    }

    /// Applies an affine map `x -> scale * x + shift` to every vertex.
    pub fn transformed(&self, scale: f64, shift: Point3) -> Result<SurfaceMesh> {
        let vertices = self.vertices.iter().map(|v| v * scale + shift).collect();
        SurfaceMesh::new(vertices, self.triangles.clone(), self.surface_id.clone())
    }

    /// Distance from `x` to the nearest point of the surface.
    pub fn distance_to(&self, x: &Point3) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                point_triangle_distance(x, &a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-triangle gradient of a piecewise-linear nodal field, averaged to
    /// vertices with area weights. The result is tangential to the surface.
    pub fn surface_gradient(&self, values: &[f64]) -> Vec<Point3> {
        let mut acc = vec![Point3::zeros(); self.vertices.len()];
        let mut wsum = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = self.triangle_points(t);
            let n = self.normals[t];
            let area = self.areas[t];
            let mut grad = Point3::zeros();
            for k in 0..3 {
                // gradient of the hat function at corner k: n x (opposite edge) / (2A)
                let edge = p[(k + 2) % 3] - p[(k + 1) % 3];
                grad += n.cross(&edge) * (values[tri[k]] / (2.0 * area));
            }
            for &v in tri {
                acc[v] += grad * area;
                wsum[v] += area;
            }
        }
        acc.iter().zip(wsum).map(|(g, w)| g / w).collect()
    }
}

fn check_edges(triangles: &[[usize; 3]]) -> Result<()> {
    // directed edge -> number of uses
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for &[a, b, c] in triangles {
        for e in [(a, b), (b, c), (c, a)] {
            *directed.entry(e).or_default() += 1;
        }
    }
    for (&(a, b), &count) in &directed {
        let reverse = directed.get(&(b, a)).copied().unwrap_or(0);
        if count + reverse != 2 {
            return Err(Error::Geometry(format!(
                "edge ({a}, {b}) is shared by {} triangles; the surface is not watertight",
                count + reverse
            )));
        }
        if count != 1 {
            return Err(Error::Geometry(format!(
                "triangles adjacent to edge ({a}, {b}) have inconsistent orientation"
            )));
        }
    }
    Ok(())
}

/// Euclidean distance from `p` to the closed triangle `abc`.
pub fn point_triangle_distance(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> f64 {
    (closest_point_on_triangle(p, a, b, c) - p).norm()
}

/// Closest point on triangle `abc` to `p` (Ericson's region classification).
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::primitives::{cube, icosahedron, icosphere, octahedron};
    use super::*;

    #[test]
    fn icosahedron_volume_matches_closed_form() {
        let mesh = icosahedron(1.0, "ico");
        let s = (mesh.vertices()[mesh.triangles()[0][0]] - mesh.vertices()[mesh.triangles()[0][1]])
            .norm();
        let expected = 5.0 / 12.0 * (3.0 + 5f64.sqrt()) * s.powi(3);
        assert!((mesh.signed_volume() - expected).abs() < 1e-9);
        assert_eq!(mesh.vertex_count(), 12);
        assert_eq!(mesh.triangle_count(), 20);
    }

    #[test]
    fn unit_cube_volume_and_flip() {
        let mesh = cube(1.0, "cube");
        assert!((mesh.signed_volume() - 1.0).abs() < 1e-14);
        assert!((mesh.flipped().signed_volume() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_area_and_volume_converge() {
        let s1280 = icosphere(1.0, 3, "s");
        assert_eq!(s1280.triangle_count(), 1280);
        let area = s1280.total_area();
        assert!((area - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI) < 0.02);
        let s5120 = icosphere(1.0, 4, "s");
        let vol = s5120.signed_volume();
        let ball = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((vol - ball).abs() / ball < 0.01);
    }

    #[test]
    fn inward_mesh_is_flipped_globally() {
        let ico = icosahedron(1.0, "x");
        let tris: Vec<[usize; 3]> = ico.triangles().iter().map(|&[a, b, c]| [a, c, b]).collect();
        let mesh = SurfaceMesh::new(ico.vertices().to_vec(), tris, "x").unwrap();
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn one_reversed_face_is_rejected() {
        let oct = octahedron(1.0, "o");
        let mut tris = oct.triangles().to_vec();
        tris[3].swap(1, 2);
        let err = SurfaceMesh::new(oct.vertices().to_vec(), tris, "o").unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn open_surface_is_rejected() {
        let oct = octahedron(1.0, "o");
        let tris = oct.triangles()[1..].to_vec();
        assert!(SurfaceMesh::new(oct.vertices().to_vec(), tris, "o").is_err());
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        // collapse a vertex of the octahedron onto an edge midpoint
        let oct = octahedron(1.0, "o");
        let mut v = oct.vertices().to_vec();
        v[0] = (v[2] + v[4]) * 0.5;
        assert!(SurfaceMesh::new(v, oct.triangles().to_vec(), "o").is_err());
    }

    #[test]
    fn closed_surface_area_vector_vanishes() {
        let mesh = icosphere(1.3, 3, "s");
        let sum: Point3 = mesh
            .normals()
            .iter()
            .zip(mesh.areas())
            .map(|(n, a)| n * *a)
            .sum();
        assert!(sum.norm() < 1e-10 * mesh.total_area());
    }

    #[test]
    fn surface_gradient_of_linear_field_is_tangential_part() {
        let mesh = icosphere(1.0, 3, "s");
        let values: Vec<f64> = mesh.vertices().iter().map(|v| v.z).collect();
        let grads = mesh.surface_gradient(&values);
        let normals = mesh.vertex_normals();
        for ((g, n), _v) in grads.iter().zip(&normals).zip(mesh.vertices()).take(50) {
            let e = Point3::z();
            let tangential = e - n * n.dot(&e);
            assert!((g - tangential).norm() < 0.05);
        }
    }

    #[test]
    fn closest_point_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        assert!((point_triangle_distance(&Point3::new(0.2, 0.2, 1.0), &a, &b, &c) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance(&Point3::new(-1.0, -1.0, 0.0), &a, &b, &c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&Point3::new(1.0, 1.0, 0.0), &a, &b, &c) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
