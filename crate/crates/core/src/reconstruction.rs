//! Surface reconstruction of the intracellular and transmembrane potentials
//! from extracellular data, and the interior null space of the inverse
//! problem.
//!
//! With `M_e = λM_i` the intracellular trace is
//! `u_i = −λ(u_e − ū_e) + 𝒩ᵢ(0, ν·M_b∇u_b) + c`, where `𝒩ᵢ` is the
//! normalized Neumann-to-Dirichlet map of `Δ_i` on `Ω_m`. In general
//! `u_i = −𝒩ᵢ(Δ_e u_e, 0) + c`, which needs `u_e` inside the heart.
//! The constant is fixed by the calibration `∮(u_i + c₀u_e) dσ = 0`, i.e.
//! `c = −c₀ ∮u_b dσ / ∮dσ`.

use std::path::Path;

use serde::Serialize;

use crate::bem::{green_representation_points, GridSamples, VolumeGrid};
use crate::cauchy::{CauchySolveReport, CauchySolver, TikhonovConfig};
use crate::error::{Error, Result};
use crate::field::{write_json, NodalField, Units};
use crate::kernels::{Conductivity, ConductivityModel};
use crate::mesh::{mesh_to_vtk, DomainConfig, Point3, SurfaceMesh};
use crate::solvers::{DirectSolveReport, NeumannOptions, NeumannSolver, NeumannValues, ShellOps, SurfaceOps, ZarembaSolver};

/// `c = −c₀ ∮u_b dσ / ∮dσ` with lumped vertex weights.
pub fn calibration_constant(u_b: &NodalField, c0: f64, mesh: &SurfaceMesh) -> Result<f64> {
    u_b.check_on(mesh)?;
    Ok(calibration_from_weights(&mesh.vertex_weights(), u_b.values(), c0))
}

fn calibration_from_weights(weights: &[f64], u_b: &[f64], c0: f64) -> f64 {
    let area: f64 = weights.iter().sum();
    let total: f64 = weights.iter().zip(u_b).map(|(w, u)| w * u).sum();
    -c0 * total / area
}

fn weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    let area: f64 = weights.iter().sum();
    weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / area
}

/// `|∮(u_i + c₀u_e) dσ| / (area · max(|u_i|, |u_e|))`.
fn calibration_residual(weights: &[f64], u_i: &[f64], u_e: &[f64], c0: f64) -> f64 {
    let area: f64 = weights.iter().sum();
    let total: f64 = weights.iter().zip(u_i.iter().zip(u_e)).map(|(w, (a, b))| w * (a + c0 * b)).sum();
    let scale = u_i.iter().chain(u_e).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale > 0.0 {
        total.abs() / (area * scale)
    } else {
        total.abs()
    }
}

/// Options used by the reconstruction for the intracellular Neumann solve.
pub fn pipeline_neumann_options() -> NeumannOptions {
    NeumannOptions {
        project: true,
        ..NeumannOptions::default()
    }
}

/// The intracellular trace and its calibration constant.
#[derive(Debug, Clone, Serialize)]
pub struct UiReconstruction {
    pub u_i: NodalField,
    pub c: f64,
    pub neumann: DirectSolveReport,
    /// `|∫Δ_e u_e dx + ∮flux dσ|` (general path only; 0 otherwise).
    pub source_flux_mismatch: f64,
}

/// `u_i = −λ(u_e − ū_e) + 𝒩ᵢ(0, flux) + c` on the heart surface.
pub fn reconstruct_ui_proportional(
    mesh: &SurfaceMesh,
    u_e: &NodalField,
    heart_flux: &NodalField,
    model: &ConductivityModel,
    c0: f64,
    options: NeumannOptions,
) -> Result<UiReconstruction> {
    u_e.check_on(mesh)?;
    heart_flux.check_on(mesh)?;
    let lambda = model.require_lambda()?;
    let solver = NeumannSolver::new(&model.intra, mesh, options)?;
    let (u_i, neumann) = proportional_values(&solver, lambda, c0, u_e.values(), heart_flux.values())?;
    let c = calibration_from_weights(&solver.ops().weights, u_e.values(), c0);
    Ok(UiReconstruction {
        u_i: NodalField::on(mesh, u_i, Units::MilliVolt)?,
        c,
        neumann: raw_report(mesh, neumann)?,
        source_flux_mismatch: 0.0,
    })
}

fn proportional_values(
    solver: &NeumannSolver,
    lambda: f64,
    c0: f64,
    u_e: &[f64],
    flux: &[f64],
) -> Result<(Vec<f64>, NeumannValues)> {
    let weights = &solver.ops().weights;
    let mean = weighted_mean(weights, u_e);
    let c = calibration_from_weights(weights, u_e, c0);
    let sol = solver.solve_values(flux, None)?;
    let u_i = u_e
        .iter()
        .zip(&sol.trace)
        .map(|(ue, w)| -lambda * (ue - mean) + w + c)
        .collect();
    Ok((u_i, sol))
}

fn raw_report(mesh: &SurfaceMesh, sol: NeumannValues) -> Result<DirectSolveReport> {
    Ok(DirectSolveReport {
        solution_trace: Some(NodalField::on(mesh, sol.trace, Units::MilliVolt)?),
        flux_trace: Some(NodalField::on(mesh, sol.flux, Units::MicroAmpPerCm2)?),
        residual_norm: sol.residual_norm,
        compatibility_defect: sol.defect,
        normalization_value: sol.normalization_value,
    })
}

/// `u_i = −𝒩ᵢ(Δ_e u_e, 0) + c`. `Δ_e u_e` is taken by finite differences
/// of the interior samples; the surface trace `u_e` only enters through
/// the calibration.
pub fn reconstruct_ui_general(
    mesh: &SurfaceMesh,
    u_e: &NodalField,
    u_e_interior: Option<&GridSamples>,
    heart_flux: &NodalField,
    model: &ConductivityModel,
    c0: f64,
    options: NeumannOptions,
) -> Result<UiReconstruction> {
    u_e.check_on(mesh)?;
    heart_flux.check_on(mesh)?;
    let samples = u_e_interior.ok_or_else(|| Error::MissingInteriorData("u_e grid samples inside the heart".into()))?;
    if samples.grid.member_count() == 0 {
        return Err(Error::MissingInteriorData("the interior grid has no cells".into()));
    }
    let g = samples.apply_operator(&model.extra);
    general_from_source(mesh, u_e, &g, heart_flux, &model.intra, c0, options)
}

fn general_from_source(
    mesh: &SurfaceMesh,
    u_e: &NodalField,
    g: &GridSamples,
    heart_flux: &NodalField,
    m_i: &Conductivity,
    c0: f64,
    options: NeumannOptions,
) -> Result<UiReconstruction> {
    let solver = NeumannSolver::new(m_i, mesh, options)?;
    let zero = NodalField::zeros(mesh, Units::MicroAmpPerCm2);
    let (trace, neumann) = solver.solve(mesh, &zero, Some(g))?;
    let c = calibration_from_weights(&solver.ops().weights, u_e.values(), c0);
    let u_i = trace.map(|w| -w + c)?;
    Ok(UiReconstruction {
        u_i,
        c,
        neumann,
        source_flux_mismatch: (g.integral() + heart_flux.integral(mesh)).abs(),
    })
}

/// Summary of the regularized Cauchy stage.
#[derive(Debug, Clone, Serialize)]
pub struct CauchySummary {
    pub chosen_alpha: f64,
    pub chosen_index: usize,
    pub residual_norm: f64,
    pub lcurve_fallback: bool,
}

impl From<&CauchySolveReport> for CauchySummary {
    fn from(r: &CauchySolveReport) -> Self {
        CauchySummary {
            chosen_alpha: r.chosen_alpha,
            chosen_index: r.chosen_index,
            residual_norm: r.residual_norm,
            lcurve_fallback: r.lcurve_fallback,
        }
    }
}

/// Residuals of every stage of a reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Relative residual of the Zaremba system (protocol 1).
    pub zaremba_residual: Option<f64>,
    /// `|∮q| / ∮|q|` of the heart flux.
    pub flux_conservation: f64,
    pub neumann_residual: f64,
    /// `∮flux dσ` before projection.
    pub compatibility_defect: f64,
    pub normalization_value: f64,
    pub calibration_residual: f64,
    pub cauchy: Option<CauchySummary>,
}

/// Reconstructed heart-surface potentials.
#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionOutput {
    pub u_e: NodalField,
    pub u_i: NodalField,
    pub v: NodalField,
    pub heart_flux: NodalField,
    pub c: f64,
    pub c0: f64,
    pub lambda: f64,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub cauchy: Option<CauchySolveReport>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    heart_surface: &'a str,
    nodes: usize,
    c: f64,
    c0: f64,
    lambda: f64,
    diagnostics: &'a Diagnostics,
    files: Vec<String>,
}

impl ReconstructionOutput {
    /// Writes `u_e`, `u_i`, `v` and `heart_flux` (CSV plus sidecar),
    /// `reconstruction.json`, `heart.vtk` and, after a Cauchy stage,
    /// `lcurve.csv`.
    pub fn save(&self, dir: &Path, heart: &SurfaceMesh) -> Result<()> {
        self.u_e.check_on(heart)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (name, field) in [("u_e", &self.u_e), ("u_i", &self.u_i), ("v", &self.v), ("heart_flux", &self.heart_flux)] {
            field.save(&dir.join(name))?;
            files.push(format!("{name}.csv"));
        }
        let vtk = mesh_to_vtk(
            heart,
            &[("u_e", self.u_e.values()), ("u_i", self.u_i.values()), ("v", self.v.values())],
        );
        let path = dir.join("heart.vtk");
        std::fs::write(&path, vtk).map_err(|e| Error::io(&path, e))?;
        files.push("heart.vtk".into());
        if let Some(report) = &self.cauchy {
            let path = dir.join("lcurve.csv");
            std::fs::write(&path, report.lcurve_csv()).map_err(|e| Error::io(&path, e))?;
            files.push("lcurve.csv".into());
        }
        let manifest = Manifest {
            heart_surface: self.u_e.surface_id(),
            nodes: self.u_e.len(),
            c: self.c,
            c0: self.c0,
            lambda: self.lambda,
            diagnostics: &self.diagnostics,
            files,
        };
        write_json(&dir.join("reconstruction.json"), &manifest)
    }
}

/// `M_i = factor · M_b` when the tensors are proportional.
fn proportional_factor(intra: &Conductivity, bath: &Conductivity) -> Option<f64> {
    let (a, b) = (intra.matrix(), bath.matrix());
    let factor = a.trace() / b.trace();
    let diff = (a - b * factor).abs().max();
    (diff <= 1e-12 * a.abs().max()).then_some(factor)
}

fn intracellular_solver(ops: &SurfaceOps, heart: Option<&SurfaceMesh>, model: &ConductivityModel) -> Result<NeumannSolver> {
    match (proportional_factor(&model.intra, &model.bath), heart) {
        (Some(f), _) => NeumannSolver::from_ops(model.intra, ops.rescaled(f)?, pipeline_neumann_options()),
        (None, Some(heart)) => NeumannSolver::new(&model.intra, heart, pipeline_neumann_options()),
        (None, None) => Err(Error::Invalid(
            "without a heart mesh the intracellular tensor must be proportional to the bath tensor".into(),
        )),
    }
}

/// Steps (b) and (c): the intracellular Neumann factorization with the
/// calibration data.
struct IntraStage {
    neumann: NeumannSolver,
    heart_id: String,
    lambda: f64,
    c0: f64,
}

impl IntraStage {
    fn new(ops: &SurfaceOps, heart: Option<&SurfaceMesh>, heart_id: &str, model: &ConductivityModel, c0: f64) -> Result<Self> {
        if !c0.is_finite() {
            return Err(Error::Invalid(format!("calibration coefficient {c0}")));
        }
        Ok(IntraStage {
            lambda: model.require_lambda()?,
            neumann: intracellular_solver(ops, heart, model)?,
            heart_id: heart_id.to_string(),
            c0,
        })
    }

    fn check(&self, u_e: &NodalField) -> Result<()> {
        let n = self.neumann.ops().nodes();
        if u_e.surface_id() != self.heart_id || u_e.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "field on '{}' with {} values, expected '{}' with {n}",
                u_e.surface_id(),
                u_e.len(),
                self.heart_id
            )));
        }
        Ok(())
    }

    fn run(&self, u_e: &NodalField, heart_flux: &[f64]) -> Result<ReconstructionOutput> {
        self.check(u_e)?;
        let weights = &self.neumann.ops().weights;
        let (u_i, sol) = proportional_values(&self.neumann, self.lambda, self.c0, u_e.values(), heart_flux)?;
        let c = calibration_from_weights(weights, u_e.values(), self.c0);
        let v: Vec<f64> = u_i.iter().zip(u_e.values()).map(|(a, b)| a - b).collect();
        let abs_flux: f64 = weights.iter().zip(heart_flux).map(|(w, q)| w * q.abs()).sum();
        let diagnostics = Diagnostics {
            zaremba_residual: None,
            flux_conservation: if abs_flux > 0.0 { sol.defect.abs() / abs_flux } else { 0.0 },
            neumann_residual: sol.residual_norm,
            compatibility_defect: sol.defect,
            normalization_value: sol.normalization_value,
            calibration_residual: calibration_residual(weights, &u_i, u_e.values(), self.c0),
            cauchy: None,
        };
        Ok(ReconstructionOutput {
            u_e: u_e.clone(),
            u_i: NodalField::new(&self.heart_id, u_i, Units::MilliVolt)?,
            v: NodalField::new(&self.heart_id, v, Units::MilliVolt)?,
            heart_flux: NodalField::new(&self.heart_id, heart_flux.to_vec(), Units::MicroAmpPerCm2)?,
            c,
            c0: self.c0,
            lambda: self.lambda,
            diagnostics,
            cauchy: None,
        })
    }
}

/// First protocol with every boundary operator assembled once: reusable
/// across time frames.
pub struct SteadyPipeline {
    zaremba: ZarembaSolver,
    stage: IntraStage,
}

impl SteadyPipeline {
    pub fn new(domain: &DomainConfig, model: &ConductivityModel, c0: f64) -> Result<Self> {
        model.require_lambda()?;
        let zaremba = ZarembaSolver::new(&model.bath, domain)?;
        Self::with_zaremba(zaremba, domain.heart(), model, c0)
    }

    pub fn with_zaremba(zaremba: ZarembaSolver, heart: &SurfaceMesh, model: &ConductivityModel, c0: f64) -> Result<Self> {
        let stage = IntraStage::new(&zaremba.ops().heart, Some(heart), heart.surface_id(), model, c0)?;
        Ok(SteadyPipeline { zaremba, stage })
    }

    /// Pipeline over precomputed shell operators (any boundary
    /// discretization); needs `M_i` proportional to `M_b`.
    pub fn from_shell_ops(ops: ShellOps, heart_id: &str, model: &ConductivityModel, c0: f64) -> Result<Self> {
        let stage = IntraStage::new(&ops.heart, None, heart_id, model, c0)?;
        Ok(SteadyPipeline {
            zaremba: ZarembaSolver::from_ops(ops)?,
            stage,
        })
    }

    pub fn zaremba(&self) -> &ZarembaSolver {
        &self.zaremba
    }

    pub fn lambda(&self) -> f64 {
        self.stage.lambda
    }

    /// Steps (a) to (c) for one heart trace.
    pub fn run(&self, u_e: &NodalField) -> Result<ReconstructionOutput> {
        self.stage.check(u_e)?;
        let z = self.zaremba.solve(u_e.values())?;
        let mut out = self.stage.run(u_e, &z.heart_flux)?;
        out.diagnostics.zaremba_residual = Some(z.residual_norm);
        Ok(out)
    }

    /// Steps (b) and (c) with a heart flux that is already known.
    pub fn run_with_flux(&self, u_e: &NodalField, heart_flux: &[f64]) -> Result<ReconstructionOutput> {
        self.stage.run(u_e, heart_flux)
    }
}

/// Second protocol with the Cauchy decomposition and the Neumann
/// factorization kept for repeated frames.
pub struct Protocol2Pipeline {
    cauchy: CauchySolver,
    stage: IntraStage,
}

impl Protocol2Pipeline {
    pub fn new(domain: &DomainConfig, model: &ConductivityModel, tikhonov: TikhonovConfig, c0: f64) -> Result<Self> {
        model.require_lambda()?;
        let cauchy = CauchySolver::new(&model.bath, domain, tikhonov)?;
        let heart = domain.heart();
        let stage = IntraStage::new(&cauchy.zaremba().ops().heart, Some(heart), heart.surface_id(), model, c0)?;
        Ok(Protocol2Pipeline { cauchy, stage })
    }

    pub fn cauchy(&self) -> &CauchySolver {
        &self.cauchy
    }

    pub fn run(&self, f: &NodalField, torso_flux: Option<&NodalField>) -> Result<ReconstructionOutput> {
        let report = self.cauchy.solve(f, torso_flux)?;
        let mut out = self.stage.run(&report.heart_dirichlet, report.heart_flux.values())?;
        out.diagnostics.cauchy = Some(CauchySummary::from(&report));
        out.cauchy = Some(report);
        Ok(out)
    }

    /// Same as [`run`](Self::run) with `alpha` imposed instead of selected.
    pub fn run_with_alpha(&self, f: &NodalField, torso_flux: Option<&NodalField>, alpha: f64) -> Result<ReconstructionOutput> {
        let (u_e, flux) = self.cauchy.traces_for_alpha(f, torso_flux, alpha)?;
        self.stage.run(&u_e, flux.values())
    }
}

/// Zaremba flux, proportional `u_i`, then `v = u_i − u_e`.
pub fn run_protocol_1(domain: &DomainConfig, model: &ConductivityModel, u_e: &NodalField, c0: f64) -> Result<ReconstructionOutput> {
    SteadyPipeline::new(domain, model, c0)?.run(u_e)
}

/// Regularized Cauchy problem for the heart traces, then the first
/// protocol with the recovered `u_e` and flux.
pub fn run_protocol_2(
    domain: &DomainConfig,
    model: &ConductivityModel,
    f: &NodalField,
    torso_flux: Option<&NodalField>,
    tikhonov: TikhonovConfig,
    c0: f64,
) -> Result<ReconstructionOutput> {
    f.check_on(domain.torso())?;
    Protocol2Pipeline::new(domain, model, tikhonov, c0)?.run(f, torso_flux)
}

/// Compactly supported bumps with `u = ∇u = 0` on the support boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bump {
    /// `A·max(0, 1 − |x − c|²/R²)³`.
    CubicRadial { center: Point3, radius: f64, amplitude: f64 },
}

impl Bump {
    pub fn validate(&self) -> Result<()> {
        let Bump::CubicRadial { center, radius, amplitude } = self;
        if !(radius.is_finite() && *radius > 0.0) || !amplitude.is_finite() || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::Invalid(format!("bump {self:?}")));
        }
        Ok(())
    }

    fn parts(&self, x: &Point3) -> (Point3, f64, f64, f64) {
        let Bump::CubicRadial { center, radius, amplitude } = *self;
        let d = x - center;
        let s = d.norm_squared() / (radius * radius);
        (d, s, radius, amplitude)
    }

    pub fn value(&self, x: &Point3) -> f64 {
        let (_, s, _, a) = self.parts(x);
        if s >= 1.0 {
            0.0
        } else {
            a * (1.0 - s).powi(3)
        }
    }

    pub fn gradient(&self, x: &Point3) -> Point3 {
        let (d, s, r, a) = self.parts(x);
        if s >= 1.0 {
            Point3::zeros()
        } else {
            d * (-6.0 * a * (1.0 - s).powi(2) / (r * r))
        }
    }

    pub fn hessian(&self, x: &Point3) -> nalgebra::Matrix3<f64> {
        let (d, s, r, a) = self.parts(x);
        if s >= 1.0 {
            return nalgebra::Matrix3::zeros();
        }
        let r2 = r * r;
        nalgebra::Matrix3::identity() * (-6.0 * a * (1.0 - s).powi(2) / r2) + d * d.transpose() * (24.0 * a * (1.0 - s) / (r2 * r2))
    }

    /// `Δ_M u = −tr(M H)`.
    pub fn apply_operator(&self, m: &Conductivity, x: &Point3) -> f64 {
        -(m.matrix() * self.hessian(x)).trace()
    }

    pub fn amplitude(&self) -> f64 {
        let Bump::CubicRadial { amplitude, .. } = *self;
        amplitude
    }
}

/// A triple `(u_e, u_i, u_b)` in the null space of the inverse problem.
#[derive(Debug, Clone)]
pub struct NullSpaceElement {
    pub bump: Bump,
    /// `u_e = u` on the interior grid.
    pub u: GridSamples,
    /// `Δ_e u` on the interior grid (analytic).
    pub delta_e_u: GridSamples,
    /// `u_i = −λu` on the grid (proportional case only).
    pub u_i_interior: Option<GridSamples>,
    pub u_e: NodalField,
    pub u_i: NodalField,
    pub u_b: NodalField,
    pub c: f64,
    pub proportional: bool,
    /// Distance from the support to the heart surface.
    pub clearance: f64,
    /// `max |u|` and `max |∇u|` over heart vertices.
    pub boundary_value_max: f64,
    pub boundary_gradient_max: f64,
    pub interior_max: f64,
    /// Neumann report of `𝒩ᵢ(Δ_e u, 0)` (general case).
    pub neumann: Option<DirectSolveReport>,
}

pub fn generate_nullspace_element(
    heart: &SurfaceMesh,
    grid: &VolumeGrid,
    model: &ConductivityModel,
    bump: Bump,
    proportional: bool,
) -> Result<NullSpaceElement> {
    bump.validate()?;
    let Bump::CubicRadial { center, radius, .. } = bump;
    if !crate::mesh::inside(heart, &center) {
        return Err(Error::SupportTouchesBoundary {
            clearance: -heart.distance_to(&center),
        });
    }
    let clearance = heart.distance_to(&center) - radius;
    if clearance <= 0.0 {
        return Err(Error::SupportTouchesBoundary { clearance });
    }
    let u = grid.sample(|x| bump.value(x));
    let delta_e_u = grid.sample(|x| bump.apply_operator(&model.extra, x));
    let boundary_value_max = heart.vertices().iter().map(|x| bump.value(x).abs()).fold(0.0, f64::max);
    let boundary_gradient_max = heart.vertices().iter().map(|x| bump.gradient(x).norm()).fold(0.0, f64::max);
    let u_e = NodalField::sample(heart, Units::MilliVolt, |x| bump.value(x))?;
    let u_b = NodalField::zeros(heart, Units::MilliVolt);
    let c = calibration_constant(&u_b, 1.0, heart)?;
    let (u_i, u_i_interior, neumann) = if proportional {
        let lambda = model.require_lambda()?;
        let ui = u.values.iter().map(|v| -lambda * v).collect();
        let trace = u_e.map(|v| -lambda * v + c)?;
        (trace, Some(GridSamples { grid: u.grid.clone(), values: ui }), None)
    } else {
        let zero = NodalField::zeros(heart, Units::MicroAmpPerCm2);
        let rec = general_from_source(heart, &u_e, &delta_e_u, &zero, &model.intra, 0.0, pipeline_neumann_options())?;
        let trace = rec.u_i.map(|v| v + c)?;
        (trace, None, Some(rec.neumann))
    };
    Ok(NullSpaceElement {
        bump,
        interior_max: u.max_abs(),
        u,
        delta_e_u,
        u_i_interior,
        u_e,
        u_i,
        u_b,
        c,
        proportional,
        clearance,
        boundary_value_max,
        boundary_gradient_max,
        neumann,
    })
}

/// Forward checks that a null-space triple is invisible from the torso.
#[derive(Debug, Clone, Serialize)]
pub struct NullSpaceCertificate {
    /// `sup |S q − K u + T(Δ_e u)|` over torso vertices from the heart
    /// traces of `u_e`.
    pub torso_green_max: f64,
    /// `sup |u_T|` of the Zaremba problem driven by the heart trace.
    pub torso_zaremba_max: f64,
    pub heart_trace_max: f64,
    /// `max |u_i + λu|` on the grid (proportional case).
    pub identity_error: Option<f64>,
    pub amplitude: f64,
}

impl NullSpaceCertificate {
    /// Both torso predictions within `tol · |amplitude|`.
    pub fn torso_silent(&self, tol: f64) -> bool {
        self.torso_green_max.max(self.torso_zaremba_max) <= tol * self.amplitude.abs()
    }
}

pub fn certify_nullspace(element: &NullSpaceElement, domain: &DomainConfig, model: &ConductivityModel) -> Result<NullSpaceCertificate> {
    let heart = domain.heart();
    let torso = domain.torso();
    element.u_e.check_on(heart)?;
    let q = NodalField::sample(heart, Units::MicroAmpPerCm2, |x| {
        model.extra.conormal(&nearest_normal(heart, x), &element.bump.gradient(x))
    })?;
    let green = green_representation_points(&model.extra, heart, &element.u_e, &q, Some(&element.delta_e_u), torso.vertices())?;
    let zaremba = ZarembaSolver::new(&model.bath, domain)?.solve(element.u_b.values())?;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let identity_error = match (&element.u_i_interior, model.lambda()) {
        (Some(ui), Some(lambda)) => Some(
            ui.grid
                .members()
                .map(|c| (ui.values[c] + lambda * element.u.values[c]).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    Ok(NullSpaceCertificate {
        torso_green_max: sup(&green),
        torso_zaremba_max: sup(&zaremba.torso_trace),
        heart_trace_max: sup(element.u_e.values()),
        identity_error,
        amplitude: element.bump.amplitude(),
    })
}

fn nearest_normal(mesh: &SurfaceMesh, x: &Point3) -> Point3 {
    let normals = mesh.vertex_normals();
    let i = mesh
        .vertices()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).norm_squared().total_cmp(&(b.1 - x).norm_squared()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    normals[i]
}

/// Adds a null-space element's heart traces to a triple of heart traces.
pub fn add_nullspace_traces(u_e: &NodalField, element: &NullSpaceElement) -> Result<NodalField> {
    if u_e.len() != element.u_e.len() {
        return Err(Error::ShapeMismatch("null-space element lives on another mesh".into()));
    }
    NodalField::new(
        u_e.surface_id(),
        u_e.values().iter().zip(element.u_e.values()).map(|(a, b)| a + b).collect(),
        u_e.units(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;
    use crate::oracle::{rmse, synth_bidomain_steady, value_range, HarmonicGeometry, HarmonicSpec, HarmonicTerm};

    fn spheres(sub: usize) -> DomainConfig {
        DomainConfig::new(icosphere(1.0, sub, "heart"), icosphere(2.0, sub, "torso"), 1e-9).unwrap()
    }

    fn model() -> ConductivityModel {
        ConductivityModel::isotropic(1.2, 4.5, 2.0).unwrap().with_lambda(3.75).unwrap()
    }

    #[test]
    fn calibration_examples() {
        let s = icosphere(1.0, 3, "heart");
        let one = NodalField::sample(&s, Units::MilliVolt, |_| 1.0).unwrap();
        assert!((calibration_constant(&one, 1.0, &s).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(calibration_constant(&one, 0.0, &s).unwrap(), 0.0);
        let z = NodalField::sample(&s, Units::MilliVolt, |x| x.z).unwrap();
        assert!(calibration_constant(&z, 1.0, &s).unwrap().abs() < 1e-3);
    }

    #[test]
    fn constant_flux_free_data_gives_scaled_trace() {
        let s = icosphere(1.0, 2, "heart");
        let ue = NodalField::sample(&s, Units::MilliVolt, |x| x.x + 2.0 * x.y * x.z).unwrap();
        let zero = NodalField::zeros(&s, Units::MicroAmpPerCm2);
        let rec = reconstruct_ui_proportional(&s, &ue, &zero, &model(), 1.0, NeumannOptions::default()).unwrap();
        let w = s.vertex_weights();
        let mean = weighted_mean(&w, ue.values());
        for (ui, e) in rec.u_i.values().iter().zip(ue.values()) {
            assert!((ui - (-3.75 * (e - mean) + rec.c)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_extracellular_trace_gives_constant_v() {
        let d = spheres(2);
        let ue = NodalField::zeros(d.heart(), Units::MilliVolt);
        let out = run_protocol_1(&d, &model(), &ue, 1.0).unwrap();
        assert!(out.v.values().iter().all(|v| (v - out.c).abs() < 1e-12));
        assert_eq!(out.c, 0.0);
    }

    #[test]
    fn protocol_1_recovers_oracle_v() {
        let d = spheres(3);
        let m = model();
        let spec = HarmonicSpec {
            terms: vec![
                HarmonicTerm { l: 1, m: 0, a: 1.0, b: 0.0 },
                HarmonicTerm { l: 2, m: 1, a: 0.5, b: 0.0 },
            ],
            geometry: HarmonicGeometry::Shell3D { r1: 1.0, r2: 2.0 },
        };
        let oracle = synth_bidomain_steady(spec.geometry, &m, &spec, 1.0).unwrap();
        let data = oracle.sample(&d).unwrap();
        let out = run_protocol_1(&d, &m, &data.u_e, 1.0).unwrap();
        let err = rmse(&out.v, &data.v).unwrap() / value_range(&data.v);
        assert!(err < 0.05, "{err}");
        let rel = l2(out.u_i.values(), data.u_i.values());
        assert!(rel < 0.03, "{rel}");
        assert!(out.diagnostics.calibration_residual < 1e-8);
        for ((v, a), b) in out.v.values().iter().zip(out.u_i.values()).zip(out.u_e.values()) {
            assert_eq!(*v, a - b);
        }
    }

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = Bump::CubicRadial {
            center: Point3::new(0.1, 0.0, -0.1),
            radius: 0.6,
            amplitude: 2.0,
        };
        let x = Point3::new(0.3, 0.2, 0.05);
        let h = 1e-5;
        for k in 0..3 {
            let e = Point3::ith(k, h);
            let fd = (b.value(&(x + e)) - b.value(&(x - e))) / (2.0 * h);
            assert!((fd - b.gradient(&x)[k]).abs() < 1e-7);
            let gd = (b.gradient(&(x + e)) - b.gradient(&(x - e))) / (2.0 * h);
            for j in 0..3 {
                assert!((gd[j] - b.hessian(&x)[(j, k)]).abs() < 1e-6);
            }
        }
        assert_eq!(b.value(&Point3::new(0.8, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn bump_touching_surface_is_rejected() {
        let s = icosphere(1.0, 2, "heart");
        let grid = VolumeGrid::inside_mesh(&s, 0.2).unwrap();
        let b = Bump::CubicRadial {
            center: Point3::new(0.5, 0.0, 0.0),
            radius: 0.6,
            amplitude: 1.0,
        };
        assert!(matches!(
            generate_nullspace_element(&s, &grid, &model(), b, true),
            Err(Error::SupportTouchesBoundary { .. })
        ));
    }

    #[test]
    fn proportional_null_space_is_exact() {
        let s = icosphere(1.0, 2, "heart");
        let grid = VolumeGrid::inside_mesh(&s, 0.1).unwrap();
        let b = Bump::CubicRadial {
            center: Point3::zeros(),
            radius: 0.5,
            amplitude: 1.0,
        };
        let el = generate_nullspace_element(&s, &grid, &model(), b, true).unwrap();
        assert_eq!(el.c, 0.0);
        assert!(el.boundary_value_max <= 1e-10 * el.interior_max);
        assert!(el.boundary_gradient_max <= 1e-10 * el.interior_max);
        let ui = el.u_i_interior.as_ref().unwrap();
        for c in grid.members() {
            assert_eq!(ui.values[c], -3.75 * el.u.values[c]);
        }
        assert!(el.u_i.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn general_path_agrees_with_proportional() {
        let d = spheres(3);
        let m = model();
        let spec = HarmonicSpec {
            terms: vec![HarmonicTerm { l: 1, m: 0, a: 1.0, b: 0.0 }, HarmonicTerm { l: 2, m: 2, a: 0.4, b: 0.0 }],
            geometry: HarmonicGeometry::Shell3D { r1: 1.0, r2: 2.0 },
        };
        let oracle = synth_bidomain_steady(spec.geometry, &m, &spec, 1.0).unwrap();
        let data = oracle.sample(&d).unwrap();
        let opts = pipeline_neumann_options();
        let grid = VolumeGrid::inside_mesh(d.heart(), 0.08).unwrap();
        let interior = grid.sample(|x| oracle.u_e(x).unwrap_or(0.0));
        let g = reconstruct_ui_general(d.heart(), &data.u_e, Some(&interior), &data.heart_flux, &m, 1.0, opts).unwrap();
        let p = reconstruct_ui_proportional(d.heart(), &data.u_e, &data.heart_flux, &m, 1.0, opts).unwrap();
        let rel = l2(g.u_i.values(), p.u_i.values());
        assert!(rel < 0.02, "{rel}");
        assert!(matches!(
            reconstruct_ui_general(d.heart(), &data.u_e, None, &data.heart_flux, &m, 1.0, opts),
            Err(Error::MissingInteriorData(_))
        ));
    }

    #[test]
    fn null_space_is_silent_on_the_torso() {
        let d = spheres(3);
        let m = model();
        let grid = VolumeGrid::inside_mesh(d.heart(), 0.06).unwrap();
        let b = Bump::CubicRadial { center: Point3::new(0.1, 0.0, 0.0), radius: 0.6, amplitude: 1.0 };
        for proportional in [true, false] {
            let el = generate_nullspace_element(d.heart(), &grid, &m, b, proportional).unwrap();
            let cert = certify_nullspace(&el, &d, &m).unwrap();
            assert!(cert.torso_silent(1e-3), "{cert:?}");
        }
    }
}
