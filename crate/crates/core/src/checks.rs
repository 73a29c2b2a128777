//! Self-checks against closed-form solutions: the elliptic Green identity
//! on a sphere, heat-kernel properties and the parabolic Green identity
//! for a caloric polynomial.

use serde::Serialize;

use crate::bem::{green_representation_points, VolumeGrid};
use crate::error::Result;
use crate::field::{NodalField, SpaceTimeField, TimeGrid, Units};
use crate::kernels::{Conductivity, HeatKernel, HeatOperatorSpec};
use crate::mesh::primitives::icosphere;
use crate::mesh::Point3;
use crate::parabolic::{parabolic_green_reconstruct, GridSeries};

#[derive(Debug, Clone, Serialize)]
pub struct GreenCheck {
    pub triangles: usize,
    /// Largest `|rec − z|` at the interior probes over `max |z| = 1`.
    pub interior_relative: f64,
    pub exterior_max: f64,
    pub pass: bool,
}

/// Green representation of `u = z` from its exact trace and flux on the
/// unit icosphere with `subdivisions` levels.
pub fn green_check(subdivisions: usize) -> Result<GreenCheck> {
    let mesh = icosphere(1.0, subdivisions, "sphere");
    let m = Conductivity::isotropic(1.0)?;
    let u = NodalField::sample(&mesh, Units::MilliVolt, |x| x.z)?;
    let normals = mesh.vertex_normals();
    let q = NodalField::on(&mesh, normals.iter().map(|n| n.z).collect(), Units::MicroAmpPerCm2)?;
    let inside = [
        Point3::zeros(),
        Point3::new(0.0, 0.0, 0.5),
        Point3::new(0.3, -0.2, -0.4),
        Point3::new(-0.1, 0.4, 0.7),
        Point3::new(0.0, 0.0, -0.8),
    ];
    let outside = [
        Point3::new(0.0, 0.0, 1.5),
        Point3::new(1.2, 0.9, -0.3),
        Point3::new(-2.0, 0.0, 1.0),
    ];
    let rec_in = green_representation_points(&m, &mesh, &u, &q, None, &inside)?;
    let rec_out = green_representation_points(&m, &mesh, &u, &q, None, &outside)?;
    let interior_relative = rec_in.iter().zip(&inside).map(|(r, x)| (r - x.z).abs()).fold(0.0, f64::max);
    let exterior_max = rec_out.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(GreenCheck {
        triangles: mesh.triangle_count(),
        interior_relative,
        exterior_max,
        pass: interior_relative <= 0.01 && exterior_max <= 1e-2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatKernelCheck {
    /// Largest `|Ψ|` over probes with `t ≤ τ`.
    pub causality_max: f64,
    pub mass_error: f64,
    /// Largest `|𝓛Ψ|` by central differences over the sum of the magnitudes
    /// of its terms.
    pub pde_residual: f64,
    pub pass: bool,
}

/// Kernel properties for the operator `spec` at elapsed time `s`.
pub fn heat_kernel_check(spec: &HeatOperatorSpec, s: f64) -> Result<HeatKernelCheck> {
    let k = HeatKernel::new(spec)?;
    let probes = [
        Point3::zeros(),
        Point3::new(0.2, -0.1, 0.3),
        Point3::new(-0.5, 0.4, 0.1),
        Point3::new(0.7, 0.0, -0.6),
    ];
    let causality_max = probes
        .iter()
        .flat_map(|d| [0.0, -1e-12, -s].map(|ds| k.eval(d, ds).abs()))
        .fold(0.0, f64::max);

    // tensor trapezoid over a box covering 10 standard deviations
    let diff = k.diffusion().matrix();
    let centre = k.drift() * s;
    let sd: Vec<f64> = (0..3).map(|i| (2.0 * s * diff[(i, i)]).sqrt()).collect();
    let half: Vec<f64> = sd.iter().map(|v| 10.0 * v).collect();
    let n = 80usize;
    let h: Vec<f64> = half.iter().map(|v| 2.0 * v / n as f64).collect();
    let mut mass = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            for l in 0..=n {
                let d = Point3::new(
                    centre.x - half[0] + i as f64 * h[0],
                    centre.y - half[1] + j as f64 * h[1],
                    centre.z - half[2] + l as f64 * h[2],
                );
                let w = [i, j, l].iter().map(|&c| if c == 0 || c == n { 0.5 } else { 1.0 }).product::<f64>();
                mass += w * k.eval(&d, s);
            }
        }
    }
    mass *= h[0] * h[1] * h[2];
    let mass_error = (mass - (-k.reaction() * s).exp()).abs();

    // steps scaled to the time and diffusion length of the kernel
    let et = 1e-3 * s;
    let e = 1e-3 * (s * diff.trace()).sqrt();
    let mut pde_residual = 0.0f64;
    for d in &probes {
        let dt = (k.eval(d, s + et) - k.eval(d, s - et)) / (2.0 * et);
        let mut grad = Point3::zeros();
        let mut hess = nalgebra::Matrix3::zeros();
        for a in 0..3 {
            let ea = Point3::ith(a, e);
            grad[a] = (k.eval(&(d + ea), s) - k.eval(&(d - ea), s)) / (2.0 * e);
            for b in 0..3 {
                let eb = Point3::ith(b, e);
                hess[(a, b)] = (k.eval(&(d + ea + eb), s) - k.eval(&(d + ea - eb), s) - k.eval(&(d - ea + eb), s)
                    + k.eval(&(d - ea - eb), s))
                    / (4.0 * e * e);
            }
        }
        let terms = [dt, -(diff * hess).trace(), k.drift().dot(&grad), k.reaction() * k.eval(d, s)];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        let r: f64 = terms.iter().sum();
        if scale > 0.0 {
            pde_residual = pde_residual.max(r.abs() / scale);
        }
    }
    Ok(HeatKernelCheck {
        causality_max,
        mass_error,
        pde_residual,
        pass: causality_max == 0.0 && mass_error <= 1e-6 && pde_residual < 1e-5,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaloricResolution {
    pub subdivisions: usize,
    pub grid_step: f64,
    pub time_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaloricCheck {
    pub resolution: CaloricResolution,
    pub value_inside: f64,
    pub relative_inside: f64,
    pub relative_outside: f64,
}

/// Parabolic Green identity for `|x|² + 6t` on the unit ball, evaluated at
/// the centre and at `(0, 0, 1.6)` for `t = 0.5`.
pub fn caloric_check(res: CaloricResolution) -> Result<CaloricCheck> {
    let mesh = icosphere(1.0, res.subdivisions, "ball");
    let time = TimeGrid::new(0.5, res.time_steps)?;
    let n = mesh.vertex_count();
    let verts = mesh.vertices().to_vec();
    let normals = mesh.vertex_normals();
    let u = SpaceTimeField::sample("u", n, time, Units::MilliVolt, |i, t| verts[i].norm_squared() + 6.0 * t)?;
    let q = SpaceTimeField::sample("q", n, time, Units::MilliVolt, |i, _| 2.0 * verts[i].dot(&normals[i]))?;
    let grid = VolumeGrid::inside_mesh(&mesh, res.grid_step)?;
    let u0 = grid.sample(|y| y.norm_squared());
    let lu = GridSeries::zeros(grid, time);
    let spec = HeatOperatorSpec::heat();
    let inside = parabolic_green_reconstruct(&spec, &mesh, &u, &q, &u0, &lu, &Point3::zeros(), 0.5)?;
    let outside = parabolic_green_reconstruct(&spec, &mesh, &u, &q, &u0, &lu, &Point3::new(0.0, 0.0, 1.6), 0.5)?;
    Ok(CaloricCheck {
        resolution: res,
        value_inside: inside,
        relative_inside: (inside - 3.0).abs() / 3.0,
        relative_outside: outside.abs() / 3.0,
    })
}
