//! Parabolic potentials of the constant-coefficient operator
//! `𝓛 = ∂_t + scale·Δ_M + a·∇ + a0` (with `Δ_M = −∇·M∇`), the parabolic
//! Green formula
//!
//! `I(u(·,0)) + G(𝓛u) + V(∂_{ν,K}u) + W(u) = u` in `Ω × (0, T)`, `0` outside,
//!
//! with `K = scale·M`, and the right-hand side of the reduced cable problem
//! `𝓛u_e = F`.
//!
//! Time integrals run over the frames of a [`TimeGrid`] with densities
//! linear between frames. Each interval is mapped to `σ = √(t − τ)`, which
//! absorbs the `(t − τ)^{−1/2}` growth of surface-integrated kernels, and
//! integrated with Gauss–Legendre nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bem::{GridSamples, VolumeGrid};
use crate::error::{Error, Result};
use crate::field::{SpaceTimeField, TimeGrid, Units};
use crate::kernels::{ConductivityModel, HeatKernel, HeatOperatorSpec};
use crate::mesh::{Point3, SurfaceMesh};
use crate::quadrature::{gauss_legendre_cached, triangle_rule};
use crate::reconstruction::pipeline_neumann_options;
use crate::solvers::NeumannSolver;

/// Gauss points per time interval.
const TIME_ORDER: usize = 6;
/// Gaussian widths beyond which grid cells are skipped.
const CUTOFF_WIDTHS: f64 = 7.0;
const MAX_SUBDIVISION: usize = 16;
/// Relative distance (to the bounding-box diagonal) treated as on the surface.
const ON_SURFACE: f64 = 1e-6;

/// Volume samples on a grid, one vector per frame.
#[derive(Debug, Clone)]
pub struct GridSeries {
    pub grid: VolumeGrid,
    pub time: TimeGrid,
    pub frames: Vec<Vec<f64>>,
}

impl GridSeries {
    pub fn new(grid: VolumeGrid, time: TimeGrid, frames: Vec<Vec<f64>>) -> Result<Self> {
        if frames.len() != time.frames() {
            return Err(Error::ShapeMismatch(format!("{} frames for a grid of {}", frames.len(), time.frames())));
        }
        if frames.iter().any(|f| f.len() != grid.cell_count()) {
            return Err(Error::ShapeMismatch("frame length differs from the cell count".into()));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("grid series has non-finite values".into()));
        }
        Ok(GridSeries { grid, time, frames })
    }

    pub fn zeros(grid: VolumeGrid, time: TimeGrid) -> Self {
        let frames = vec![vec![0.0; grid.cell_count()]; time.frames()];
        GridSeries { grid, time, frames }
    }

    /// Samples `f(x, t)` at member cell centres.
    pub fn sample(grid: &VolumeGrid, time: TimeGrid, f: impl Fn(&Point3, f64) -> f64 + Sync) -> Self {
        let frames = time.times().into_iter().map(|t| grid.sample(|x| f(x, t)).values).collect();
        GridSeries {
            grid: grid.clone(),
            time,
            frames,
        }
    }

    pub fn frame(&self, k: usize) -> GridSamples {
        GridSamples {
            grid: self.grid.clone(),
            values: self.frames[k].clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParabolicLayer {
    /// `V(v) = ∫∫ Ψ v`.
    SingleLayer,
    /// `W(w) = −∫∫ (n·K∇_y + a·n) Ψ w`.
    DoubleLayer,
}

#[derive(Debug, Clone, Copy)]
struct TimeNode {
    /// `t − τ`.
    s: f64,
    weight: f64,
    frame: usize,
    theta: f64,
}

fn time_rule(grid: &TimeGrid, t: f64) -> Result<Vec<TimeNode>> {
    if !(t.is_finite() && t >= 0.0 && t <= grid.t_end * (1.0 + 1e-12)) {
        return Err(Error::Invalid(format!("time {t} outside [0, {}]", grid.t_end)));
    }
    let gl = gauss_legendre_cached(TIME_ORDER);
    let mut nodes = Vec::new();
    for k in 0..grid.steps {
        let a = grid.time(k);
        if a >= t {
            break;
        }
        let end = grid.time(k + 1);
        let b = end.min(t);
        let (sa, sb) = ((t - a).sqrt(), (t - b).max(0.0).sqrt());
        for &(x, w) in gl {
            let sigma = sb + (sa - sb) * x;
            let tau = t - sigma * sigma;
            nodes.push(TimeNode {
                s: sigma * sigma,
                weight: w * (sa - sb) * 2.0 * sigma,
                frame: k,
                theta: ((tau - a) / (end - a)).clamp(0.0, 1.0),
            });
        }
    }
    Ok(nodes)
}

fn check_off_surface(mesh: &SurfaceMesh, x: &Point3, boundary: bool) -> Result<()> {
    let distance = mesh.distance_to(x);
    if distance < ON_SURFACE * mesh.bbox_diagonal() {
        return Err(if boundary {
            Error::PointOnBoundary { distance }
        } else {
            Error::PointOnSurface { distance }
        });
    }
    Ok(())
}

/// `I(h)(x, t) = ∫ Ψ(x, y, t, 0) h(y) dy` over the member cells.
pub fn poisson_integral(spec: &HeatOperatorSpec, h: &GridSamples, x: &Point3, t: f64) -> Result<f64> {
    let kernel = HeatKernel::new(spec)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Invalid(format!("Poisson integral needs t > 0, got {t}")));
    }
    Ok(grid_heat_integral(&kernel, &h.grid, &|c| h.values[c], x, t))
}

/// `∫ Ψ(x − y, s) g(y) dy` by the midpoint rule, with cells subdivided
/// until the sub-cells are no wider than the Gaussian.
fn grid_heat_integral(kernel: &HeatKernel, grid: &VolumeGrid, value: &(dyn Fn(usize) -> f64 + Sync), x: &Point3, s: f64) -> f64 {
    let lmax = kernel.diffusion().matrix().symmetric_eigenvalues().max();
    let width = (2.0 * lmax * s).sqrt();
    let centre = x - kernel.drift() * s;
    let h = grid.spacing();
    if width * (MAX_SUBDIVISION as f64) < h {
        // the Gaussian sits inside one cell
        return grid
            .locate(&centre)
            .filter(|&c| grid.is_member(c))
            .map_or(0.0, |c| value(c) * (-kernel.reaction() * s).exp());
    }
    let sub = ((h / width).ceil() as usize).clamp(1, MAX_SUBDIVISION);
    let reach = CUTOFF_WIDTHS * width + h;
    let dims = grid.dims();
    let origin = grid.origin();
    let range = |k: usize| -> (usize, usize) {
        let lo = ((centre[k] - reach - origin[k]) / h).floor().max(0.0) as usize;
        let hi = (((centre[k] + reach - origin[k]) / h).ceil().max(0.0) as usize).min(dims[k]);
        (lo.min(dims[k]), hi)
    };
    let (r0, r1, r2) = (range(0), range(1), range(2));
    let hs = h / sub as f64;
    let sub_volume = hs * hs * hs;
    (r2.0..r2.1)
        .into_par_iter()
        .map(|k| {
            let mut acc = 0.0;
            for j in r1.0..r1.1 {
                for i in r0.0..r0.1 {
                    let c = grid.index(i, j, k);
                    if !grid.is_member(c) {
                        continue;
                    }
                    let v = value(c);
                    if v == 0.0 {
                        continue;
                    }
                    let corner = grid.center(c) - Point3::repeat(0.5 * h);
                    let mut cell = 0.0;
                    for a in 0..sub {
                        for b in 0..sub {
                            for d in 0..sub {
                                let y = corner + Point3::new(a as f64 + 0.5, b as f64 + 0.5, d as f64 + 0.5) * hs;
                                cell += kernel.eval(&(x - y), s);
                            }
                        }
                    }
                    acc += cell * sub_volume * v;
                }
            }
            acc
        })
        .sum()
}

/// `G(g)(x, t) = ∫₀ᵗ ∫ Ψ(x, y, t, τ) g(y, τ) dy dτ`.
pub fn volume_parabolic_potential(spec: &HeatOperatorSpec, g: &GridSeries, x: &Point3, t: f64) -> Result<f64> {
    let kernel = HeatKernel::new(spec)?;
    let rule = time_rule(&g.time, t)?;
    let zero: Vec<bool> = g.frames.iter().map(|f| f.iter().all(|v| *v == 0.0)).collect();
    Ok(rule
        .par_iter()
        .map(|node| {
            let (k, th) = (node.frame, node.theta);
            if zero[k] && zero[k + 1] {
                return 0.0;
            }
            let (f0, f1) = (&g.frames[k], &g.frames[k + 1]);
            let value = move |c: usize| (1.0 - th) * f0[c] + th * f1[c];
            node.weight * grid_heat_integral(&kernel, &g.grid, &value, x, node.s)
        })
        .sum())
}

/// Single- or double-layer parabolic potential of a nodal density on `mesh`
/// at `(x, t)`, `x` off the surface.
pub fn parabolic_layer_potential(
    spec: &HeatOperatorSpec,
    mesh: &SurfaceMesh,
    density: &SpaceTimeField,
    kind: ParabolicLayer,
    x: &Point3,
    t: f64,
) -> Result<f64> {
    let kernel = HeatKernel::new(spec)?;
    if density.nodes() != mesh.vertex_count() {
        return Err(Error::ShapeMismatch(format!(
            "density has {} nodes, surface {} vertices",
            density.nodes(),
            mesh.vertex_count()
        )));
    }
    check_off_surface(mesh, x, false)?;
    let rule = time_rule(density.grid(), t)?;
    Ok(layer_sum(&kernel, mesh, density, kind, x, &rule))
}

fn layer_sum(kernel: &HeatKernel, mesh: &SurfaceMesh, density: &SpaceTimeField, kind: ParabolicLayer, x: &Point3, rule: &[TimeNode]) -> f64 {
    if rule.is_empty() || density.as_slice().iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    (0..mesh.triangle_count())
        .into_par_iter()
        .map(|tri| {
            let p = mesh.triangle_points(tri);
            let ids = mesh.triangles()[tri];
            let n = mesh.normals()[tri];
            let mut acc = 0.0;
            triangle_rule(x, &p, mesh.areas()[tri], &mut |y, b, w| {
                let d = x - y;
                let mut sum = 0.0;
                for node in rule {
                    let at = |k: usize| b[0] * density.get(ids[0], k) + b[1] * density.get(ids[1], k) + b[2] * density.get(ids[2], k);
                    let phi = (1.0 - node.theta) * at(node.frame) + node.theta * at(node.frame + 1);
                    if phi == 0.0 {
                        continue;
                    }
                    let k = match kind {
                        ParabolicLayer::SingleLayer => kernel.eval(&d, node.s),
                        ParabolicLayer::DoubleLayer => -kernel.eval_conormal(&d, node.s, &n),
                    };
                    sum += node.weight * k * phi;
                }
                acc += w * sum;
            });
            acc
        })
        .sum()
}

/// The four terms of the parabolic Green formula at one point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenParts {
    pub poisson: f64,
    pub volume: f64,
    pub single_layer: f64,
    pub double_layer: f64,
}

impl GreenParts {
    pub fn total(&self) -> f64 {
        self.poisson + self.volume + self.single_layer + self.double_layer
    }
}

/// `I(u₀) + G(𝓛u) + V(∂_{ν,K}u) + W(u)` at `(x, t)`; equals `u(x, t)` inside
/// the domain enclosed by `mesh` and vanishes outside.
#[allow(clippy::too_many_arguments)]
pub fn parabolic_green_parts(
    spec: &HeatOperatorSpec,
    mesh: &SurfaceMesh,
    u_trace: &SpaceTimeField,
    flux_trace: &SpaceTimeField,
    u_initial: &GridSamples,
    lu: &GridSeries,
    x: &Point3,
    t: f64,
) -> Result<GreenParts> {
    let kernel = HeatKernel::new(spec)?;
    for f in [u_trace, flux_trace] {
        if f.nodes() != mesh.vertex_count() {
            return Err(Error::ShapeMismatch(format!("{} has {} nodes for {} vertices", f.label(), f.nodes(), mesh.vertex_count())));
        }
    }
    if u_trace.grid() != flux_trace.grid() || u_trace.grid() != &lu.time {
        return Err(Error::ShapeMismatch("traces and source use different time grids".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("Green formula needs t > 0, got {t}")));
    }
    check_off_surface(mesh, x, true)?;
    let rule = time_rule(u_trace.grid(), t)?;
    Ok(GreenParts {
        poisson: grid_heat_integral(&kernel, &u_initial.grid, &|c| u_initial.values[c], x, t),
        volume: volume_parabolic_potential(spec, lu, x, t)?,
        single_layer: layer_sum(&kernel, mesh, flux_trace, ParabolicLayer::SingleLayer, x, &rule),
        double_layer: layer_sum(&kernel, mesh, u_trace, ParabolicLayer::DoubleLayer, x, &rule),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn parabolic_green_reconstruct(
    spec: &HeatOperatorSpec,
    mesh: &SurfaceMesh,
    u_trace: &SpaceTimeField,
    flux_trace: &SpaceTimeField,
    u_initial: &GridSamples,
    lu: &GridSeries,
    x: &Point3,
    t: f64,
) -> Result<f64> {
    parabolic_green_parts(spec, mesh, u_trace, flux_trace, u_initial, lu, x, t).map(|p| p.total())
}

/// Right-hand side of `𝓛u_e = F` on the heart surface.
///
/// With `u_i = −λu_e + 𝒩ᵢ(0, q) + k(t)` (`q` the heart flux of `u_b`,
/// `k` the spatially constant part) the transmembrane potential is
/// `v = −(λ+1)(u_e − w)` with `w = (𝒩ᵢ(0, q) + k)/(λ+1)`, and since
/// `Δ_e w = 0` the cable equation gives
/// `F = h + (∂_t + a·∇ + a0) w` (drift and reaction already divided by
/// `C_m` in `spec`). `∂_t` uses central differences, one-sided at the ends;
/// `∇w` combines the surface gradient with the normal derivative implied
/// by the flux.
pub fn assemble_evolution_rhs(
    mesh: &SurfaceMesh,
    model: &ConductivityModel,
    spec: &HeatOperatorSpec,
    h: &SpaceTimeField,
    heart_flux: &SpaceTimeField,
    offset: &[f64],
) -> Result<SpaceTimeField> {
    let lambda = model.require_lambda()?;
    spec.validate()?;
    let n = mesh.vertex_count();
    if h.nodes() != n || heart_flux.nodes() != n {
        return Err(Error::ShapeMismatch("h and the flux must live on the heart vertices".into()));
    }
    let grid = *h.grid();
    if heart_flux.grid() != &grid || offset.len() != grid.frames() {
        return Err(Error::ShapeMismatch("h, flux and offset use different time grids".into()));
    }
    let solver = NeumannSolver::new(&model.intra, mesh, pipeline_neumann_options())?;
    let solved: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.frames())
        .into_par_iter()
        .map(|k| {
            let sol = solver.solve_values(heart_flux.frame(k), None)?;
            let w: Vec<f64> = sol.trace.iter().map(|v| (v + offset[k]) / (lambda + 1.0)).collect();
            let q: Vec<f64> = sol.flux.iter().map(|v| v / (lambda + 1.0)).collect();
            Ok((w, q))
        })
        .collect::<Result<_>>()?;
    let drift = spec.drift_vector();
    let reaction = spec.reaction;
    let normals = mesh.vertex_normals();
    let m_i = *model.intra.matrix();
    let dt = grid.dt();
    let last = grid.frames() - 1;
    let frames = (0..grid.frames())
        .into_par_iter()
        .map(|k| {
            let (w, q) = &solved[k];
            let dwdt: Vec<f64> = match k {
                0 => diff(&solved[1].0, w, dt),
                k if k == last => diff(w, &solved[k - 1].0, dt),
                k => diff(&solved[k + 1].0, &solved[k - 1].0, 2.0 * dt),
            };
            let grad = if drift == Point3::zeros() {
                None
            } else {
                Some(mesh.surface_gradient(w))
            };
            (0..n)
                .map(|i| {
                    let mut f = h.get(i, k) + dwdt[i] + reaction * w[i];
                    if let Some(g) = &grad {
                        let nv = normals[i];
                        let tangential = g[i] - nv * nv.dot(&g[i]);
                        let normal = (q[i] - nv.dot(&(m_i * tangential))) / nv.dot(&(m_i * nv));
                        f += drift.dot(&(tangential + nv * normal));
                    }
                    f
                })
                .collect()
        })
        .collect();
    SpaceTimeField::from_frames("F", grid, frames, h.units())
}

fn diff(a: &[f64], b: &[f64], step: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) / step).collect()
}

/// Where a field is sampled, for gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Sampling<'a> {
    /// Heart vertices: only the tangential gradient is available.
    Surface(&'a SurfaceMesh),
    /// Member cells of a grid (finite differences).
    Grid(&'a VolumeGrid),
}

/// `I_ion = a·∇v + a0·v + b`, frame by frame.
pub fn ionic_current_linear(
    v: &SpaceTimeField,
    sampling: Sampling<'_>,
    a: [f64; 3],
    a0: f64,
    b: Option<&SpaceTimeField>,
) -> Result<SpaceTimeField> {
    let nodes = match sampling {
        Sampling::Surface(m) => m.vertex_count(),
        Sampling::Grid(g) => g.cell_count(),
    };
    if v.nodes() != nodes {
        return Err(Error::ShapeMismatch(format!("{} values for {nodes} sample points", v.nodes())));
    }
    if let Some(b) = b {
        if b.nodes() != nodes || b.grid() != v.grid() {
            return Err(Error::ShapeMismatch("source term does not match v".into()));
        }
    }
    if !(a.iter().all(|x| x.is_finite()) && a0.is_finite()) {
        return Err(Error::Invalid("ionic coefficients must be finite".into()));
    }
    let a = Point3::from(a);
    let frames = (0..v.grid().frames())
        .into_par_iter()
        .map(|k| {
            let frame = v.frame(k);
            let grad = if a == Point3::zeros() {
                vec![Point3::zeros(); nodes]
            } else {
                match sampling {
                    Sampling::Surface(m) => m.surface_gradient(frame),
                    Sampling::Grid(g) => GridSamples {
                        grid: g.clone(),
                        values: frame.to_vec(),
                    }
                    .gradient(),
                }
            };
            (0..nodes)
                .map(|i| a.dot(&grad[i]) + a0 * frame[i] + b.map_or(0.0, |b| b.get(i, k)))
                .collect()
        })
        .collect();
    SpaceTimeField::from_frames("I_ion", *v.grid(), frames, Units::MicroAmpPerCm2)
}

/// `max |𝓛u − F| / max |F|` over interior grid cells and interior frames,
/// with `𝓛` by finite differences: the consistency residual of an
/// evolutionary reconstruction sampled on a grid.
pub fn evolution_residual(spec: &HeatOperatorSpec, u: &GridSeries, f: &GridSeries) -> Result<f64> {
    if u.grid != f.grid || u.time != f.time {
        return Err(Error::ShapeMismatch("u and F are sampled differently".into()));
    }
    let k = spec.diffusion()?;
    let drift = spec.drift_vector();
    let dt = u.time.dt();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for step in 1..u.time.frames().saturating_sub(1) {
        let frame = u.frame(step);
        let lap = frame.apply_operator(&k);
        let grad = frame.gradient();
        for c in u.grid.members().filter(|&c| u.grid.is_interior(c)) {
            let dudt = (u.frames[step + 1][c] - u.frames[step - 1][c]) / (2.0 * dt);
            let lu = dudt + lap.values[c] + drift.dot(&grad[c]) + spec.reaction * frame.values[c];
            worst = worst.max((lu - f.frames[step][c]).abs());
            scale = scale.max(f.frames[step][c].abs());
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}
