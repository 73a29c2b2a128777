use super::{mat_vec, pair_operators, volume_potential, GridSamples};
use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::kernels::Conductivity;
use crate::mesh::{Point3, SurfaceMesh};

/// Points closer to the surface than this fraction of its bounding-box
/// diagonal count as lying on it.
const ON_SURFACE: f64 = 1e-6;

/// `S q(x) − K u(x) + T g(x)`: reproduces `u(x)` inside the mesh and
/// vanishes outside when `(u, q, g)` are the trace, conormal flux and
/// `Δ_M u` of one function.
pub fn green_representation(
    m: &Conductivity,
    mesh: &SurfaceMesh,
    dirichlet: &NodalField,
    conormal: &NodalField,
    g_volume: Option<&GridSamples>,
    x: &Point3,
) -> Result<f64> {
    Ok(green_representation_points(m, mesh, dirichlet, conormal, g_volume, std::slice::from_ref(x))?[0])
}

pub fn green_representation_points(
    m: &Conductivity,
    mesh: &SurfaceMesh,
    dirichlet: &NodalField,
    conormal: &NodalField,
    g_volume: Option<&GridSamples>,
    xs: &[Point3],
) -> Result<Vec<f64>> {
    dirichlet.check_on(mesh)?;
    conormal.check_on(mesh)?;
    let tol = ON_SURFACE * mesh.bbox_diagonal();
    for x in xs {
        let distance = mesh.distance_to(x);
        if distance < tol {
            return Err(Error::PointOnBoundary { distance });
        }
    }
    let (s, k) = pair_operators(m, mesh, xs)?;
    let sq = mat_vec(&s, conormal.values());
    let ku = mat_vec(&k, dirichlet.values());
    let mut out: Vec<f64> = sq.iter().zip(&ku).map(|(a, b)| a - b).collect();
    if let Some(g) = g_volume {
        let t = volume_potential(m, g, xs)?;
        for (o, v) in out.iter_mut().zip(t.values) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Units;
    use crate::mesh::primitives::icosphere;

    #[test]
    fn linear_function_and_constant_on_sphere() {
        let s = icosphere(1.0, 3, "s");
        let m = Conductivity::isotropic(1.0).unwrap();
        let u = NodalField::sample(&s, Units::MilliVolt, |p| p.z).unwrap();
        let normals = s.vertex_normals();
        let q = NodalField::on(&s, normals.iter().map(|n| n.z).collect(), Units::MilliVoltPerCm).unwrap();
        let pts = [Point3::new(0.0, 0.0, 0.5), Point3::new(0.0, 0.0, 2.0)];
        let v = green_representation_points(&m, &s, &u, &q, None, &pts).unwrap();
        assert!((v[0] - 0.5).abs() < 0.005, "{}", v[0]);
        assert!(v[1].abs() < 1e-2, "{}", v[1]);

        let one = NodalField::on(&s, vec![1.0; s.vertex_count()], Units::MilliVolt).unwrap();
        let zero = NodalField::zeros(&s, Units::MilliVoltPerCm);
        let c = green_representation(&m, &s, &one, &zero, None, &Point3::new(0.3, 0.2, -0.1)).unwrap();
        assert!((c - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_points_on_the_surface() {
        let s = icosphere(1.0, 1, "s");
        let m = Conductivity::isotropic(1.0).unwrap();
        let z = NodalField::zeros(&s, Units::MilliVolt);
        let x = s.vertices()[0];
        assert!(matches!(
            green_representation(&m, &s, &z, &z, None, &x),
            Err(Error::PointOnBoundary { .. })
        ));
    }
}
