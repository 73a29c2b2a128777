//! Reference polyhedra used by the oracle datasets and the tests.

use std::collections::HashMap;

use super::{Point3, SurfaceMesh};

/// Regular icosahedron with vertices on the sphere of the given radius.
pub fn icosahedron(radius: f64, surface_id: &str) -> SurfaceMesh {
    let (v, t) = icosahedron_raw();
    let v = v.into_iter().map(|p| p.normalize() * radius).collect();
    SurfaceMesh::new(v, t, surface_id).expect("icosahedron is a valid closed surface")
}

fn icosahedron_raw() -> (Vec<Point3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let v = vec![
        Point3::new(-1.0, phi, 0.0),
        Point3::new(1.0, phi, 0.0),
        Point3::new(-1.0, -phi, 0.0),
        Point3::new(1.0, -phi, 0.0),
        Point3::new(0.0, -1.0, phi),
        Point3::new(0.0, 1.0, phi),
        Point3::new(0.0, -1.0, -phi),
        Point3::new(0.0, 1.0, -phi),
        Point3::new(phi, 0.0, -1.0),
        Point3::new(phi, 0.0, 1.0),
        Point3::new(-phi, 0.0, -1.0),
        Point3::new(-phi, 0.0, 1.0),
    ];
    let t = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v, t)
}

/// Geodesic sphere: the icosahedron with every triangle split into four
/// `subdivisions` times, new vertices projected onto the sphere.
///
/// | subdivisions | triangles | vertices |
/// |---|---|---|
/// | 2 | 320 | 162 |
/// | 3 | 1280 | 642 |
/// | 4 | 5120 | 2562 |
pub fn icosphere(radius: f64, subdivisions: usize, surface_id: &str) -> SurfaceMesh {
    let (mut v, mut t) = icosahedron_raw();
    for p in &mut v {
        *p = p.normalize();
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(t.len() * 4);
        let mut mid = |a: usize, b: usize, v: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        for &[a, b, c] in &t {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    let v = v.into_iter().map(|p| p * radius).collect();
    SurfaceMesh::new(v, t, surface_id).expect("icosphere is a valid closed surface")
}

/// Regular octahedron with vertices at distance `radius` on the axes.
pub fn octahedron(radius: f64, surface_id: &str) -> SurfaceMesh {
    let r = radius;
    let v = vec![
        Point3::new(r, 0.0, 0.0),
        Point3::new(-r, 0.0, 0.0),
        Point3::new(0.0, r, 0.0),
        Point3::new(0.0, -r, 0.0),
        Point3::new(0.0, 0.0, r),
        Point3::new(0.0, 0.0, -r),
    ];
    let t = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    SurfaceMesh::new(v, t, surface_id).expect("octahedron is a valid closed surface")
}

/// Axis-aligned cube `[0, side]^3` split into 12 triangles.
pub fn cube(side: f64, surface_id: &str) -> SurfaceMesh {
    let s = side;
    let v: Vec<Point3> = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 != 0 { s } else { 0.0 },
                if i & 2 != 0 { s } else { 0.0 },
                if i & 4 != 0 { s } else { 0.0 },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // z = 0
        [4, 5, 7, 6], // z = s
        [0, 1, 5, 4], // y = 0
        [2, 6, 7, 3], // y = s
        [0, 4, 6, 2], // x = 0
        [1, 3, 7, 5], // x = s
    ];
    let t = quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect();
    SurfaceMesh::new(v, t, surface_id).expect("cube is a valid closed surface")
}
