//! Well-posed boundary value problems solved through the direct boundary
//! integral formulation: Dirichlet, normalized Neumann and the Zaremba
//! problem on the shell between the heart and torso surfaces.
//!
//! The block systems are written in terms of assembled operators only, so
//! the same algebra serves surfaces in 3D and curves in 2D.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::Serialize;

use crate::bem::{mat_vec, pair_operators, self_operators, volume_potential, GridSamples};
use crate::error::{Error, Result};
use crate::field::{NodalField, Units};
use crate::kernels::Conductivity;
use crate::mesh::{DomainConfig, Point3, SurfaceMesh};

/// Single- and double-layer matrices of one closed boundary collocated at
/// its own nodes, with the lumped quadrature weights of the nodes.
#[derive(Debug, Clone)]
pub struct SurfaceOps {
    pub id: String,
    pub s: Mat<f64>,
    pub k: Mat<f64>,
    pub weights: Vec<f64>,
}

impl SurfaceOps {
    pub fn assemble(m: &Conductivity, mesh: &SurfaceMesh) -> Result<Self> {
        let (s, k) = self_operators(m, mesh)?;
        Ok(SurfaceOps {
            id: mesh.surface_id().to_string(),
            s,
            k,
            weights: mesh.vertex_weights(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integral(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Operators for the tensor `factor · M` given those for `M`: the single
    /// layer scales by `1/factor`, the double layer is unchanged.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Invalid(format!("conductivity factor {factor} must be positive")));
        }
        let mut out = self.clone();
        out.s = Mat::from_fn(self.s.nrows(), self.s.ncols(), |i, j| self.s[(i, j)] / factor);
        Ok(out)
    }
}

/// Operators of the shell `Ω_b` between an inner (heart) and an outer
/// (torso) boundary, all for the same tensor. `*_th` maps heart densities
/// to torso nodes and `*_ht` torso densities to heart nodes. Double layers
/// use the outward normal of each surface.
#[derive(Debug, Clone)]
pub struct ShellOps {
    pub heart: SurfaceOps,
    pub torso: SurfaceOps,
    pub s_th: Mat<f64>,
    pub k_th: Mat<f64>,
    pub s_ht: Mat<f64>,
    pub k_ht: Mat<f64>,
}

impl ShellOps {
    pub fn assemble(m: &Conductivity, domain: &DomainConfig) -> Result<Self> {
        let (h, t) = (domain.heart(), domain.torso());
        let (s_th, k_th) = pair_operators(m, h, t.vertices())?;
        let (s_ht, k_ht) = pair_operators(m, t, h.vertices())?;
        Ok(ShellOps {
            heart: SurfaceOps::assemble(m, h)?,
            torso: SurfaceOps::assemble(m, t)?,
            s_th,
            k_th,
            s_ht,
            k_ht,
        })
    }
}

/// Outcome diagnostics of a direct solve.
#[derive(Debug, Clone, Serialize)]
pub struct DirectSolveReport {
    pub solution_trace: Option<NodalField>,
    pub flux_trace: Option<NodalField>,
    /// Relative residual `‖Ax − b‖ / ‖b‖` of the boundary system.
    pub residual_norm: f64,
    /// `∮u1 dσ + ∫g dx` before any projection (Neumann only).
    pub compatibility_defect: f64,
    /// `∮u dσ` of the returned Dirichlet trace.
    pub normalization_value: f64,
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(a: &Mat<f64>, x: &[f64], b: &[f64]) -> f64 {
    let ax = mat_vec(a, x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let scale = norm(b);
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

fn factor(a: &Mat<f64>) -> Result<PartialPivLu<f64>> {
    let lu = a.partial_piv_lu();
    // a zero or non-finite pivot means breakdown
    let u = lu.U();
    for i in 0..u.nrows() {
        let p = u[(i, i)];
        if !p.is_finite() || p == 0.0 {
            return Err(Error::SolveFailure(format!("zero pivot at row {i}")));
        }
    }
    Ok(lu)
}

fn solved(lu: &PartialPivLu<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let x = to_vec(&lu.solve(&col(b)));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure("non-finite solution".into()));
    }
    Ok(x)
}

fn half_plus(k: &Mat<f64>, sign: f64) -> Mat<f64> {
    Mat::from_fn(k.nrows(), k.ncols(), |i, j| sign * k[(i, j)] + if i == j { 0.5 } else { 0.0 })
}

/// Interior Dirichlet problem on the domain enclosed by `mesh`: solves
/// `S q = (I/2 + K) u0` for the conormal flux and evaluates the Green
/// representation at `targets`.
pub fn solve_dirichlet(
    m: &Conductivity,
    mesh: &SurfaceMesh,
    u0: &NodalField,
    targets: &[Point3],
) -> Result<(Vec<f64>, DirectSolveReport)> {
    u0.check_on(mesh)?;
    let ops = SurfaceOps::assemble(m, mesh)?;
    let rhs = mat_vec(&half_plus(&ops.k, 1.0), u0.values());
    let lu = factor(&ops.s)?;
    let q = solved(&lu, &rhs)?;
    let residual_norm = relative_residual(&ops.s, &q, &rhs);
    let values = if targets.is_empty() {
        Vec::new()
    } else {
        let (s, k) = pair_operators(m, mesh, targets)?;
        let sq = mat_vec(&s, &q);
        let ku = mat_vec(&k, u0.values());
        sq.iter().zip(&ku).map(|(a, b)| a - b).collect()
    };
    let report = DirectSolveReport {
        normalization_value: ops.integral(u0.values()),
        solution_trace: Some(u0.clone()),
        flux_trace: Some(NodalField::on(mesh, q, Units::MilliVoltPerCm)?),
        residual_norm,
        compatibility_defect: 0.0,
    };
    Ok((values, report))
}

/// Dirichlet problem on the shell `Ω_b` with data on both surfaces.
/// Returns values at `targets` and the heart flux (outward heart normal)
/// in the report; the torso flux is the second element.
pub fn solve_dirichlet_shell(
    m: &Conductivity,
    domain: &DomainConfig,
    u_heart: &NodalField,
    u_torso: &NodalField,
    targets: &[Point3],
) -> Result<(Vec<f64>, NodalField, DirectSolveReport)> {
    let (h, t) = (domain.heart(), domain.torso());
    u_heart.check_on(h)?;
    u_torso.check_on(t)?;
    let ops = ShellOps::assemble(m, domain)?;
    let (nh, nt) = (ops.heart.nodes(), ops.torso.nodes());
    let n = nh + nt;
    // unknowns [q_T; q_H]
    // torso rows: −S_TT q_T + S_TH q_H = −(I/2 + K_TT) u_T + K_TH u_H
    // heart rows: −S_HT q_T + S_HH q_H = −(I/2 − K_HH) u_H − K_HT u_T
    let a = Mat::from_fn(n, n, |i, j| match (i < nt, j < nt) {
        (true, true) => -ops.torso.s[(i, j)],
        (true, false) => ops.s_th[(i, j - nt)],
        (false, true) => -ops.s_ht[(i - nt, j)],
        (false, false) => ops.heart.s[(i - nt, j - nt)],
    });
    let kt = mat_vec(&half_plus(&ops.torso.k, 1.0), u_torso.values());
    let kth = mat_vec(&ops.k_th, u_heart.values());
    let kh = mat_vec(&half_plus(&ops.heart.k, -1.0), u_heart.values());
    let kht = mat_vec(&ops.k_ht, u_torso.values());
    let mut rhs = Vec::with_capacity(n);
    rhs.extend((0..nt).map(|i| -kt[i] + kth[i]));
    rhs.extend((0..nh).map(|i| -kh[i] - kht[i]));
    let lu = factor(&a)?;
    let x = solved(&lu, &rhs)?;
    let residual_norm = relative_residual(&a, &x, &rhs);
    let (q_t, q_h) = x.split_at(nt);
    let values = if targets.is_empty() {
        Vec::new()
    } else {
        let (st, ktt) = pair_operators(m, t, targets)?;
        let (sh, khh) = pair_operators(m, h, targets)?;
        let a1 = mat_vec(&st, q_t);
        let a2 = mat_vec(&ktt, u_torso.values());
        let a3 = mat_vec(&sh, q_h);
        let a4 = mat_vec(&khh, u_heart.values());
        (0..targets.len()).map(|i| a1[i] - a2[i] - a3[i] + a4[i]).collect()
    };
    let heart_flux = NodalField::on(h, q_h.to_vec(), Units::MilliVoltPerCm)?;
    let report = DirectSolveReport {
        solution_trace: Some(u_heart.clone()),
        flux_trace: Some(NodalField::on(t, q_t.to_vec(), Units::MilliVoltPerCm)?),
        residual_norm,
        compatibility_defect: 0.0,
        normalization_value: ops.heart.integral(u_heart.values()),
    };
    Ok((values, heart_flux, report))
}

/// Tolerance and projection policy for Neumann data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NeumannOptions {
    /// Relative compatibility tolerance.
    pub tolerance: f64,
    /// Subtract the mean defect from the flux instead of failing.
    pub project: bool,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions {
            tolerance: 1e-6,
            project: false,
        }
    }
}

/// Discrete Neumann-to-Dirichlet map `𝒩(g, u1)` of the domain enclosed by a
/// surface: the trace of the solution of `Δ_M u = g`, `nᵀM∇u = u1` with
/// `∮u dσ = 0`. The bordered matrix
/// `[[I/2 + K, 1], [wᵀ, 0]]` is factored once.
pub struct NeumannSolver {
    m: Conductivity,
    ops: SurfaceOps,
    bordered: Mat<f64>,
    lu: PartialPivLu<f64>,
    options: NeumannOptions,
}

impl NeumannSolver {
    pub fn new(m: &Conductivity, mesh: &SurfaceMesh, options: NeumannOptions) -> Result<Self> {
        Self::from_ops(*m, SurfaceOps::assemble(m, mesh)?, options)
    }

    pub fn from_ops(m: Conductivity, ops: SurfaceOps, options: NeumannOptions) -> Result<Self> {
        let n = ops.nodes();
        let bordered = Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => ops.k[(i, j)] + if i == j { 0.5 } else { 0.0 },
            (true, false) => 1.0,
            (false, true) => ops.weights[j],
            (false, false) => 0.0,
        });
        let lu = factor(&bordered)?;
        Ok(NeumannSolver {
            m,
            ops,
            bordered,
            lu,
            options,
        })
    }

    pub fn ops(&self) -> &SurfaceOps {
        &self.ops
    }

    /// Normalized trace for boundary flux `u1` and an optional volume
    /// source `g = Δ_M u` sampled on a grid inside the surface.
    pub fn solve(&self, mesh: &SurfaceMesh, u1: &NodalField, g: Option<&GridSamples>) -> Result<(NodalField, DirectSolveReport)> {
        u1.check_on(mesh)?;
        let source = match g {
            Some(g) => Some(VolumeSource {
                integral: g.integral(),
                abs_integral: g.grid.members().map(|c| g.values[c].abs()).sum::<f64>() * g.grid.cell_volume(),
                potential: volume_potential(&self.m, g, mesh.vertices())?.values,
            }),
            None => None,
        };
        let sol = self.solve_values(u1.values(), source.as_ref())?;
        let trace = NodalField::on(mesh, sol.trace, Units::MilliVolt)?;
        let report = DirectSolveReport {
            solution_trace: Some(trace.clone()),
            flux_trace: Some(NodalField::on(mesh, sol.flux, Units::MilliVoltPerCm)?),
            residual_norm: sol.residual_norm,
            compatibility_defect: sol.defect,
            normalization_value: sol.normalization_value,
        };
        Ok((trace, report))
    }

    /// The same solve on raw nodal vectors, with the volume source already
    /// reduced to its potential at the nodes.
    pub fn solve_values(&self, u1: &[f64], source: Option<&VolumeSource>) -> Result<NeumannValues> {
        let n = self.ops.nodes();
        if u1.len() != n {
            return Err(Error::ShapeMismatch(format!("{} flux values for {n} nodes", u1.len())));
        }
        if let Some(src) = source {
            if src.potential.len() != n {
                return Err(Error::ShapeMismatch("volume potential length differs from node count".into()));
            }
        }
        let area = self.ops.area();
        let flux_integral = self.ops.integral(u1);
        let defect = flux_integral + source.map_or(0.0, |s| s.integral);
        let flux_scale = u1.iter().fold(0.0f64, |a, v| a.max(v.abs())) * area;
        let scale = flux_scale.max(source.map_or(0.0, |s| s.abs_integral));
        let tolerance = self.options.tolerance * scale;
        let mut flux = u1.to_vec();
        if defect.abs() > tolerance {
            if !self.options.project {
                return Err(Error::IncompatibleData { defect, tolerance });
            }
            let shift = defect / area;
            flux.iter_mut().for_each(|v| *v -= shift);
        }
        let mut rhs = mat_vec(&self.ops.s, &flux);
        if let Some(src) = source {
            for (r, v) in rhs.iter_mut().zip(&src.potential) {
                *r += v;
            }
        }
        rhs.push(0.0);
        let x = solved(&self.lu, &rhs)?;
        let residual_norm = relative_residual(&self.bordered, &x, &rhs);
        let trace = x[..n].to_vec();
        Ok(NeumannValues {
            normalization_value: self.ops.integral(&trace),
            trace,
            flux,
            residual_norm,
            defect,
        })
    }
}

/// A volume source reduced to what the boundary solve needs.
#[derive(Debug, Clone)]
pub struct VolumeSource {
    /// `∫ g dx`.
    pub integral: f64,
    /// `∫ |g| dx`, the compatibility scale.
    pub abs_integral: f64,
    /// `T g` at the boundary nodes.
    pub potential: Vec<f64>,
}

/// Raw result of [`NeumannSolver::solve_values`].
#[derive(Debug, Clone)]
pub struct NeumannValues {
    pub trace: Vec<f64>,
    /// The flux actually used (projected when the data were incompatible).
    pub flux: Vec<f64>,
    pub residual_norm: f64,
    pub defect: f64,
    pub normalization_value: f64,
}

/// Normalized Neumann problem with interior evaluation at `targets`.
pub fn solve_neumann_normalized(
    m: &Conductivity,
    mesh: &SurfaceMesh,
    u1: &NodalField,
    g: Option<&GridSamples>,
    targets: &[Point3],
    options: NeumannOptions,
) -> Result<(Vec<f64>, DirectSolveReport)> {
    let solver = NeumannSolver::new(m, mesh, options)?;
    let (trace, report) = solver.solve(mesh, u1, g)?;
    let values = if targets.is_empty() {
        Vec::new()
    } else {
        let flux = report.flux_trace.as_ref().expect("neumann report carries the flux");
        let (s, k) = pair_operators(m, mesh, targets)?;
        let sq = mat_vec(&s, flux.values());
        let ku = mat_vec(&k, trace.values());
        let mut v: Vec<f64> = sq.iter().zip(&ku).map(|(a, b)| a - b).collect();
        if let Some(g) = g {
            let t = volume_potential(m, g, targets)?;
            v.iter_mut().zip(t.values).for_each(|(a, b)| *a += b);
        }
        v
    };
    Ok((values, report))
}

/// Mixed problem on the shell: `Δ u = 0` in `Ω_b`, `u` given on the heart,
/// zero flux on the torso. The block matrix over `[u_T; q_H]` is factored
/// once and reused for every heart datum.
pub struct ZarembaSolver {
    ops: ShellOps,
    system: Mat<f64>,
    lu: PartialPivLu<f64>,
}

/// Heart flux and torso trace of one Zaremba solve.
#[derive(Debug, Clone)]
pub struct ZarembaSolution {
    pub heart_flux: Vec<f64>,
    pub torso_trace: Vec<f64>,
    pub residual_norm: f64,
    /// `|∮q dσ| / ∮|q| dσ` on the heart (0 for a zero flux).
    pub conservation_residual: f64,
}

impl ZarembaSolver {
    pub fn new(m_b: &Conductivity, domain: &DomainConfig) -> Result<Self> {
        Self::from_ops(ShellOps::assemble(m_b, domain)?)
    }

    pub fn from_ops(ops: ShellOps) -> Result<Self> {
        let (nh, nt) = (ops.heart.nodes(), ops.torso.nodes());
        let n = nh + nt;
        // torso rows: (I/2 + K_TT) u_T + S_TH q_H = K_TH u_H
        // heart rows: K_HT u_T + S_HH q_H = −(I/2 − K_HH) u_H
        let system = Mat::from_fn(n, n, |i, j| match (i < nt, j < nt) {
            (true, true) => ops.torso.k[(i, j)] + if i == j { 0.5 } else { 0.0 },
            (true, false) => ops.s_th[(i, j - nt)],
            (false, true) => ops.k_ht[(i - nt, j)],
            (false, false) => ops.heart.s[(i - nt, j - nt)],
        });
        let lu = factor(&system)?;
        Ok(ZarembaSolver { ops, system, lu })
    }

    pub fn ops(&self) -> &ShellOps {
        &self.ops
    }

    fn rhs_matrix(&self) -> Mat<f64> {
        let (nh, nt) = (self.ops.heart.nodes(), self.ops.torso.nodes());
        Mat::from_fn(nt + nh, nh, |i, j| {
            if i < nt {
                self.ops.k_th[(i, j)]
            } else {
                let r = i - nt;
                self.ops.heart.k[(r, j)] - if r == j { 0.5 } else { 0.0 }
            }
        })
    }

    pub fn solve(&self, u_heart: &[f64]) -> Result<ZarembaSolution> {
        let (nh, nt) = (self.ops.heart.nodes(), self.ops.torso.nodes());
        if u_heart.len() != nh {
            return Err(Error::ShapeMismatch(format!("{} heart values for {nh} heart nodes", u_heart.len())));
        }
        let rhs = mat_vec(&self.rhs_matrix(), u_heart);
        let x = solved(&self.lu, &rhs)?;
        let residual_norm = relative_residual(&self.system, &x, &rhs);
        let (u_t, q_h) = x.split_at(nt);
        Ok(ZarembaSolution {
            conservation_residual: conservation(&self.ops.heart.weights, q_h),
            heart_flux: q_h.to_vec(),
            torso_trace: u_t.to_vec(),
            residual_norm,
        })
    }

    /// Maps heart Dirichlet data to `(torso trace, heart flux)` as dense
    /// matrices (`N_T × N_H` and `N_H × N_H`).
    pub fn transfer_matrices(&self) -> Result<(Mat<f64>, Mat<f64>)> {
        let (nh, nt) = (self.ops.heart.nodes(), self.ops.torso.nodes());
        let x = self.lu.solve(&self.rhs_matrix());
        let a = Mat::from_fn(nt, nh, |i, j| x[(i, j)]);
        let f = Mat::from_fn(nh, nh, |i, j| x[(nt + i, j)]);
        crate::bem::check_finite(&a, "transfer matrix")?;
        Ok((a, f))
    }

    /// `(torso trace, heart flux)` produced by a torso flux `q_T` with zero
    /// heart data; subtracting it turns Cauchy data with nonzero torso flux
    /// into the zero-flux case.
    pub fn torso_flux_response(&self, q_torso: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nh, nt) = (self.ops.heart.nodes(), self.ops.torso.nodes());
        // moving S_TT q_T and S_HT q_T to the right-hand side
        let st = mat_vec(&self.ops.torso.s, q_torso);
        let sh = mat_vec(&self.ops.s_ht, q_torso);
        let mut rhs = st;
        rhs.extend(sh);
        debug_assert_eq!(rhs.len(), nt + nh);
        let x = solved(&self.lu, &rhs)?;
        Ok((x[..nt].to_vec(), x[nt..].to_vec()))
    }
}

fn conservation(weights: &[f64], q: &[f64]) -> f64 {
    let total: f64 = weights.iter().zip(q).map(|(w, v)| w * v).sum();
    let abs: f64 = weights.iter().zip(q).map(|(w, v)| w * v.abs()).sum();
    if abs > 0.0 {
        total.abs() / abs
    } else {
        0.0
    }
}

/// Step (a) of the first protocol: the flux `n_heartᵀM_b∇u_b` on the heart
/// for `u_b = u_dirichlet` on the heart and zero flux on the torso. The
/// report's solution trace is the induced torso potential.
pub fn solve_zaremba(
    m_b: &Conductivity,
    domain: &DomainConfig,
    u_dirichlet_on_heart: &NodalField,
) -> Result<(NodalField, DirectSolveReport)> {
    u_dirichlet_on_heart.check_on(domain.heart())?;
    let solver = ZarembaSolver::new(m_b, domain)?;
    let sol = solver.solve(u_dirichlet_on_heart.values())?;
    let flux = NodalField::on(domain.heart(), sol.heart_flux.clone(), Units::MilliVoltPerCm)?;
    let report = DirectSolveReport {
        solution_trace: Some(NodalField::on(domain.torso(), sol.torso_trace, Units::MilliVolt)?),
        flux_trace: Some(flux.clone()),
        residual_norm: sol.residual_norm,
        compatibility_defect: solver.ops.heart.integral(&sol.heart_flux),
        normalization_value: solver.ops.heart.integral(u_dirichlet_on_heart.values()),
    };
    Ok((flux, report))
}
