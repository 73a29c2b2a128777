//! Collocation boundary element operators with piecewise-linear densities.
//!
//! For a domain `D` with outward normal `n`, `Δ_M u = g` in `D` and
//! `q = nᵀM∇u` on `∂D`, the Green representation reads
//!
//! `u(x) = S q(x) − K u(x) + T g(x)` for `x ∈ D`, and `0` outside `D̄`,
//!
//! where `S` is the single layer (kernel `φ_M`), `K` the double layer
//! (kernel `n_yᵀM∇_yφ_M`) and `T` the volume potential. At a smooth
//! boundary point the left side becomes `u/2`; the on-surface double-layer
//! matrix stores the principal value with its diagonal chosen so that every
//! row sums to `−1/2`.

mod dump;
mod green;
mod volume;

use faer::Mat;
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Conductivity;
use crate::mesh::{Point3, SurfaceMesh};
use crate::quadrature::{integrate_hats, integrate_hats_duffy};

pub use dump::{load_operator, save_operator};
pub use green::{green_representation, green_representation_points};
pub use volume::{volume_potential, GridSamples, VolumeGrid, VolumePotential};

/// Gauss order per direction of the Duffy rule for self-panel integrals.
const DUFFY_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    SingleLayer,
    DoubleLayer,
}

/// Where a layer potential is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Collocation at the vertices of a surface. When it is the source
    /// surface itself the singular integration path is used.
    Surface(&'a SurfaceMesh),
    Points(&'a [Point3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetDesc {
    Surface(String),
    Points(usize),
}

/// A dense collocation matrix: rows are targets, columns source vertices.
#[derive(Debug, Clone)]
pub struct LayerOperators {
    pub kind: LayerKind,
    pub source_surface: String,
    pub target: TargetDesc,
    pub tensor: Matrix3<f64>,
    pub matrix: Mat<f64>,
}

impl LayerOperators {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Matrix-vector product with a nodal density.
    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        mat_vec(&self.matrix, density)
    }
}

pub fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

pub fn assemble_layer(kind: LayerKind, m: &Conductivity, source: &SurfaceMesh, target: Target<'_>) -> Result<LayerOperators> {
    let (single, double) = match target {
        Target::Surface(t) if same_surface(source, t) => self_operators(m, source)?,
        Target::Surface(t) => pair_operators(m, source, t.vertices())?,
        Target::Points(p) => pair_operators(m, source, p)?,
    };
    let desc = match target {
        Target::Surface(t) => TargetDesc::Surface(t.surface_id().to_string()),
        Target::Points(p) => TargetDesc::Points(p.len()),
    };
    Ok(LayerOperators {
        kind,
        source_surface: source.surface_id().to_string(),
        target: desc,
        tensor: *m.matrix(),
        matrix: match kind {
            LayerKind::SingleLayer => single,
            LayerKind::DoubleLayer => double,
        },
    })
}

fn same_surface(a: &SurfaceMesh, b: &SurfaceMesh) -> bool {
    std::ptr::eq(a, b) || (a.triangles() == b.triangles() && a.vertices() == b.vertices())
}

/// Single- and double-layer matrices of `source` collocated at its own
/// vertices. The double-layer diagonal is set from the row-sum identity.
pub fn self_operators(m: &Conductivity, source: &SurfaceMesh) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = source.vertex_count();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = source.vertices()[i];
            let mut s = vec![0.0; n];
            let mut k = vec![0.0; n];
            for (t, tri) in source.triangles().iter().enumerate() {
                let p = source.triangle_points(t);
                let area = source.areas()[t];
                if let Some(corner) = tri.iter().position(|&v| v == i) {
                    // the double-layer kernel vanishes on a flat panel through x
                    let hs = integrate_hats_duffy(&p, corner, area, DUFFY_ORDER, &|y: &Point3| m.green(&(x - y)));
                    for c in 0..3 {
                        s[tri[c]] += hs[c];
                    }
                    continue;
                }
                let normal = source.normals()[t];
                let hs = integrate_hats(&x, &p, area, &|y: &Point3| m.green(&(x - y)));
                let hk = integrate_hats(&x, &p, area, &|y: &Point3| m.green_conormal(&(x - y), &normal));
                for c in 0..3 {
                    s[tri[c]] += hs[c];
                    k[tri[c]] += hk[c];
                }
            }
            let off: f64 = k.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
            k[i] = -0.5 - off;
            (s, k)
        })
        .collect();
    to_matrices(rows, n)
}

/// Single- and double-layer matrices of `source` evaluated at points away
/// from it (another surface or interior/exterior points).
pub fn pair_operators(m: &Conductivity, source: &SurfaceMesh, targets: &[Point3]) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = source.vertex_count();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = targets
        .par_iter()
        .map(|x| {
            let mut s = vec![0.0; n];
            let mut k = vec![0.0; n];
            for (t, tri) in source.triangles().iter().enumerate() {
                let p = source.triangle_points(t);
                let area = source.areas()[t];
                let normal = source.normals()[t];
                let hs = integrate_hats(x, &p, area, &|y: &Point3| m.green(&(x - y)));
                let hk = integrate_hats(x, &p, area, &|y: &Point3| m.green_conormal(&(x - y), &normal));
                for c in 0..3 {
                    s[tri[c]] += hs[c];
                    k[tri[c]] += hk[c];
                }
            }
            (s, k)
        })
        .collect();
    to_matrices(rows, n)
}

fn to_matrices(rows: Vec<(Vec<f64>, Vec<f64>)>, n: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let r = rows.len();
    let s = Mat::from_fn(r, n, |i, j| rows[i].0[j]);
    let k = Mat::from_fn(r, n, |i, j| rows[i].1[j]);
    check_finite(&s, "single layer")?;
    check_finite(&k, "double layer")?;
    Ok((s, k))
}

pub fn check_finite(m: &Mat<f64>, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::QuadratureFailure(format!("{what} entry ({i}, {j})")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    fn identity() -> Conductivity {
        Conductivity::isotropic(1.0).unwrap()
    }

    #[test]
    fn uniform_sphere_charge_at_centre() {
        let s = icosphere(1.0, 3, "s");
        let op = assemble_layer(LayerKind::SingleLayer, &identity(), &s, Target::Points(&[Point3::zeros()])).unwrap();
        let v = op.apply(&vec![1.0; s.vertex_count()])[0];
        assert!((v - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn gauss_solid_angle_inside_and_outside() {
        let s = icosphere(1.0, 3, "s");
        let pts = [Point3::new(0.1, -0.2, 0.3), Point3::new(0.0, 0.0, 2.5)];
        let op = assemble_layer(LayerKind::DoubleLayer, &identity(), &s, Target::Points(&pts)).unwrap();
        let v = op.apply(&vec![1.0; s.vertex_count()]);
        assert!((v[0] + 1.0).abs() < 0.01, "{}", v[0]);
        assert!(v[1].abs() < 0.01, "{}", v[1]);
    }

    #[test]
    fn self_double_layer_rows_sum_to_minus_half() {
        let s = icosphere(1.0, 2, "s");
        let op = assemble_layer(LayerKind::DoubleLayer, &identity(), &s, Target::Surface(&s)).unwrap();
        for row in op.apply(&vec![1.0; s.vertex_count()]) {
            assert!((row + 0.5).abs() < 5e-3);
        }
    }

    #[test]
    fn self_single_layer_matches_sphere_eigenvalue() {
        // on the unit sphere the single layer maps Y_l to Y_l / (2l + 1)
        let s = icosphere(1.0, 3, "s");
        let op = assemble_layer(LayerKind::SingleLayer, &identity(), &s, Target::Surface(&s)).unwrap();
        let z: Vec<f64> = s.vertices().iter().map(|v| v.z).collect();
        let sz = op.apply(&z);
        let err = sz.iter().zip(&z).map(|(a, b)| (a - b / 3.0).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn anisotropic_double_layer_still_integrates_to_minus_one() {
        let m = Conductivity::new(Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5)).unwrap();
        let s = icosphere(1.0, 3, "s");
        let op = assemble_layer(LayerKind::DoubleLayer, &m, &s, Target::Points(&[Point3::new(0.2, 0.1, 0.0)])).unwrap();
        let v = op.apply(&vec![1.0; s.vertex_count()])[0];
        assert!((v + 1.0).abs() < 0.01, "{v}");
    }
}
