//! Analytic ground truth: harmonic expansions on concentric spheres and
//! annuli, and closed-form steady bidomain datasets built from them.
//!
//! Nothing here touches the boundary-element code, so every comparison
//! against it is an independent check.

mod harmonics;

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{NodalField, SpaceTimeField, Units};
use crate::kernels::ConductivityModel;
use crate::mesh::{DomainConfig, Point3};

pub use harmonics::{
    eval_harmonic, irregular_solid, regular_solid, surface_harmonic, HarmonicGeometry, HarmonicSpec, HarmonicTerm,
    MAX_DEGREE,
};

/// Radial solution of one harmonic term of the steady proportional
/// bidomain problem.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadialTerm {
    pub l: usize,
    pub m: i32,
    /// Heart trace coefficient of `u_e = u_b`.
    pub trace: f64,
    /// `u_b = (A + B r^{p−l}) R_l` in the shell (2D, `l = 0`: `A + B ln r`).
    pub ub_a: f64,
    pub ub_b: f64,
    /// `u_e = (α + β r²) R_l` inside the heart.
    pub ue_alpha: f64,
    pub ue_beta: f64,
    /// Coefficient of the harmonic correction `W R_l` in `u_i`.
    pub ui_w: f64,
    /// Heart flux coefficient `σ_b ∂_r u_b` at `R1` (outward heart normal).
    pub flux: f64,
}

/// Closed-form steady bidomain solution on a spherical (or circular) heart
/// inside a concentric torso, isotropic media, `σ_e = λ σ_i`.
#[derive(Debug, Clone, Serialize)]
pub struct BidomainOracle {
    pub geometry: HarmonicGeometry,
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub sigma_b: f64,
    pub lambda: f64,
    pub c0: f64,
    /// Mean of `u_e = u_b` over the heart surface.
    pub mean_trace: f64,
    /// Calibrated constant `c = −c₀ · mean(u_b)`.
    pub c: f64,
    pub terms: Vec<RadialTerm>,
    pub residuals: OracleResiduals,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OracleResiduals {
    /// `max |u_b − u_e|` coefficient mismatch on the heart.
    pub transmission_value: f64,
    /// `max |σ_b ∂_r u_b − σ_e ∂_r u_e|` on the heart.
    pub transmission_flux: f64,
    /// `max |σ_i ∂_r u_i|` on the heart.
    pub intracellular_flux: f64,
    /// `max |∂_r u_b|` on the torso.
    pub torso_flux: f64,
    /// `∮ flux` over the heart.
    pub compatibility: f64,
}

fn shell_radii(geometry: HarmonicGeometry) -> Result<(f64, f64, usize)> {
    match geometry {
        HarmonicGeometry::Shell3D { r1, r2 } if r1 > 0.0 && r2 > r1 => Ok((r1, r2, 3)),
        HarmonicGeometry::Annulus2D { r1, r2 } if r1 > 0.0 && r2 > r1 => Ok((r1, r2, 2)),
        _ => Err(Error::Invalid(
            "the bidomain oracle needs a Shell3D or Annulus2D geometry with 0 < R1 < R2".into(),
        )),
    }
}

/// Builds the oracle from the heart trace of `u_e` given by `spec` (its
/// terms are evaluated on the heart radius).
pub fn synth_bidomain_steady(
    geometry: HarmonicGeometry,
    model: &ConductivityModel,
    spec: &HarmonicSpec,
    c0: f64,
) -> Result<BidomainOracle> {
    let (r1, r2, dim) = shell_radii(geometry)?;
    let scalar = |c: &crate::kernels::Conductivity, name: &str| {
        c.as_scalar()
            .ok_or_else(|| Error::Invalid(format!("the oracle needs an isotropic {name} conductivity")))
    };
    let sigma_i = scalar(&model.intra, "intracellular")?;
    let sigma_e = scalar(&model.extra, "extracellular")?;
    let sigma_b = scalar(&model.bath, "bath")?;
    let lambda = model.require_lambda()?;
    if !c0.is_finite() {
        return Err(Error::Invalid("c0 must be finite".into()));
    }
    let trace_spec = HarmonicSpec {
        terms: spec.terms.clone(),
        geometry,
    };
    trace_spec.validate()?;

    let mut terms = Vec::with_capacity(spec.terms.len());
    for t in &spec.terms {
        let trace = if dim == 2 && t.l == 0 {
            t.a + t.b * r1.ln()
        } else {
            let p = decay_exponent(t.l, dim);
            t.a * r1.powi(t.l as i32) + t.b * r1.powi(p)
        };
        terms.push(radial_term(t.l, t.m, trace, r1, r2, dim, sigma_i, sigma_e, sigma_b));
    }
    let mean_trace: f64 = terms.iter().filter(|t| t.l == 0).map(|t| t.trace).sum();
    let mut oracle = BidomainOracle {
        geometry,
        sigma_i,
        sigma_e,
        sigma_b,
        lambda,
        c0,
        mean_trace,
        c: -c0 * mean_trace,
        terms,
        residuals: OracleResiduals::default(),
    };
    oracle.residuals = oracle.compute_residuals();
    Ok(oracle)
}

/// Exponent `p` of the decaying radial solution `r^p` (3D: `−l−1`, 2D: `−l`).
fn decay_exponent(l: usize, dim: usize) -> i32 {
    -((l + dim - 2) as i32)
}

#[allow(clippy::too_many_arguments)]
fn radial_term(
    l: usize,
    m: i32,
    trace: f64,
    r1: f64,
    r2: f64,
    dim: usize,
    sigma_i: f64,
    sigma_e: f64,
    sigma_b: f64,
) -> RadialTerm {
    let lf = l as f64;
    if l == 0 {
        // constants: no flux anywhere
        return RadialTerm {
            l,
            m,
            trace,
            ub_a: trace,
            ub_b: 0.0,
            ue_alpha: trace,
            ue_beta: 0.0,
            ui_w: 0.0,
            flux: 0.0,
        };
    }
    // u_b = A r^l + B r^p on the radial axis, zero derivative at R2
    let p = decay_exponent(l, dim);
    let pf = p as f64;
    let kappa = -lf * r2.powi(l as i32 - p) / pf;
    let a = trace / (r1.powi(l as i32) + kappa * r1.powi(p));
    let b = kappa * a;
    let flux = sigma_b * (lf * a * r1.powi(l as i32 - 1) + pf * b * r1.powi(p - 1));
    // u_e = α r^l + β r^{l+2} with matching trace and σ_e ∂_r u_e = flux
    let beta = (flux / sigma_e - lf * trace / r1) / (2.0 * r1.powi(l as i32 + 1));
    let alpha = (trace - beta * r1.powi(l as i32 + 2)) / r1.powi(l as i32);
    let w = flux / (sigma_i * lf * r1.powi(l as i32 - 1));
    RadialTerm {
        l,
        m,
        trace,
        ub_a: a,
        ub_b: b,
        ue_alpha: alpha,
        ue_beta: beta,
        ui_w: w,
        flux,
    }
}

impl BidomainOracle {
    pub fn radii(&self) -> (f64, f64) {
        let (r1, r2, _) = shell_radii(self.geometry).expect("validated on construction");
        (r1, r2)
    }

    fn dim(&self) -> usize {
        shell_radii(self.geometry).expect("validated on construction").2
    }

    /// `R_l(x) = r^l Y_lm` (3D) or `Re/Im (x + iy)^l` (2D).
    fn regular(&self, t: &RadialTerm, x: &Point3) -> f64 {
        if self.dim() == 3 {
            regular_solid(t.l, t.m, x).0
        } else {
            let term = HarmonicTerm {
                l: t.l,
                m: t.m,
                a: 1.0,
                b: 0.0,
            };
            harmonics::harmonic_2d(&term, x.x, x.y).0
        }
    }

    fn radius(&self, x: &Point3) -> f64 {
        if self.dim() == 3 {
            x.norm()
        } else {
            x.xy().norm()
        }
    }

    /// Surface harmonic at the direction of `x`: `R_l(x) / r^l`.
    fn angular(&self, t: &RadialTerm, x: &Point3) -> f64 {
        if t.l == 0 {
            return self.regular(t, x);
        }
        self.regular(t, x) / self.radius(x).powi(t.l as i32)
    }

    fn check_inside_heart(&self, x: &Point3) -> Result<()> {
        let (r1, _) = self.radii();
        if self.radius(x) > r1 * (1.0 + 1e-9) {
            return Err(Error::OutOfGeometry([x.x, x.y, x.z]));
        }
        Ok(())
    }

    /// `u_b` in the shell.
    pub fn u_b(&self, x: &Point3) -> Result<f64> {
        let (r1, r2) = self.radii();
        let r = self.radius(x);
        if r < r1 * (1.0 - 1e-9) || r > r2 * (1.0 + 1e-9) {
            return Err(Error::OutOfGeometry([x.x, x.y, x.z]));
        }
        let dim = self.dim();
        Ok(self
            .terms
            .iter()
            .map(|t| {
                if t.l == 0 {
                    return t.ub_a;
                }
                let p = decay_exponent(t.l, dim);
                (t.ub_a + t.ub_b * r.powi(p - t.l as i32)) * self.regular(t, x)
            })
            .sum())
    }

    /// `u_e` inside the heart.
    pub fn u_e(&self, x: &Point3) -> Result<f64> {
        self.check_inside_heart(x)?;
        let r2 = self.radius(x).powi(2);
        Ok(self
            .terms
            .iter()
            .map(|t| (t.ue_alpha + t.ue_beta * r2) * self.regular(t, x))
            .sum())
    }

    /// `Δ_e u_e = −σ_e ∇²u_e` inside the heart.
    pub fn delta_e_u_e(&self, x: &Point3) -> Result<f64> {
        self.check_inside_heart(x)?;
        let dim = self.dim() as f64;
        Ok(self
            .terms
            .iter()
            .map(|t| -self.sigma_e * t.ue_beta * (4.0 * t.l as f64 + 2.0 * dim) * self.regular(t, x))
            .sum())
    }

    /// `u_i = −λ (u_e − mean) + W R_l + c` inside the heart.
    pub fn u_i(&self, x: &Point3) -> Result<f64> {
        let ue = self.u_e(x)?;
        let w: f64 = self.terms.iter().map(|t| t.ui_w * self.regular(t, x)).sum();
        Ok(-self.lambda * (ue - self.mean_trace) + w + self.c)
    }

    /// `v = u_i − u_e` inside the heart.
    pub fn v(&self, x: &Point3) -> Result<f64> {
        Ok(self.u_i(x)? - self.u_e(x)?)
    }

    /// Heart traces at the directions of `points` (radius is projected to
    /// `R1`).
    pub fn heart_traces(&self, points: &[Point3]) -> HeartTraces {
        let (r1, _) = self.radii();
        let rows: Vec<[f64; 4]> = points
            .par_iter()
            .map(|x| {
                let mut ue = 0.0;
                let mut flux = 0.0;
                let mut w = 0.0;
                for t in &self.terms {
                    let y = self.angular(t, x);
                    ue += t.trace * y;
                    flux += t.flux * y;
                    w += t.ui_w * r1.powi(t.l as i32) * y;
                }
                let ui = -self.lambda * (ue - self.mean_trace) + w + self.c;
                [ue, ui, ui - ue, flux]
            })
            .collect();
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        HeartTraces {
            u_e: col(0),
            u_i: col(1),
            v: col(2),
            flux: col(3),
        }
    }

    /// Torso trace `f = u_b` at the directions of `points` (radius is
    /// projected to `R2`).
    pub fn torso_trace(&self, points: &[Point3]) -> Vec<f64> {
        let (_, r2) = self.radii();
        let dim = self.dim();
        points
            .par_iter()
            .map(|x| {
                self.terms
                    .iter()
                    .map(|t| {
                        if t.l == 0 {
                            return t.ub_a;
                        }
                        let p = decay_exponent(t.l, dim);
                        let y = self.angular(t, x) * r2.powi(t.l as i32);
                        (t.ub_a + t.ub_b * r2.powi(p - t.l as i32)) * y
                    })
                    .sum()
            })
            .collect()
    }

    fn compute_residuals(&self) -> OracleResiduals {
        let (r1, r2) = self.radii();
        let dim = self.dim();
        let mut res = OracleResiduals::default();
        for t in &self.terms {
            if t.l == 0 {
                res.transmission_value = res.transmission_value.max((t.ub_a - t.trace).abs());
                res.compatibility += t.flux;
                continue;
            }
            let l = t.l as i32;
            let lf = t.l as f64;
            let p = decay_exponent(t.l, dim);
            let pf = p as f64;
            let ub = t.ub_a * r1.powi(l) + t.ub_b * r1.powi(p);
            let ue = t.ue_alpha * r1.powi(l) + t.ue_beta * r1.powi(l + 2);
            let dub = lf * t.ub_a * r1.powi(l - 1) + pf * t.ub_b * r1.powi(p - 1);
            let due = lf * t.ue_alpha * r1.powi(l - 1) + (lf + 2.0) * t.ue_beta * r1.powi(l + 1);
            let dw = lf * t.ui_w * r1.powi(l - 1);
            let dub2 = lf * t.ub_a * r2.powi(l - 1) + pf * t.ub_b * r2.powi(p - 1);
            res.transmission_value = res.transmission_value.max((ub - ue).abs());
            res.transmission_flux = res
                .transmission_flux
                .max((self.sigma_b * dub - self.sigma_e * due).abs());
            res.intracellular_flux = res
                .intracellular_flux
                .max((self.sigma_i * (-self.lambda * due + dw)).abs());
            res.torso_flux = res.torso_flux.max(dub2.abs());
        }
        res
    }

    /// Samples every surface field of the dataset on the meshes of `domain`.
    pub fn sample(&self, domain: &DomainConfig) -> Result<SteadyDataset> {
        let heart = domain.heart();
        let torso = domain.torso();
        let h = self.heart_traces(heart.vertices());
        let f = self.torso_trace(torso.vertices());
        let heart_flux = NodalField::on(heart, h.flux, Units::MicroAmpPerCm2)?;
        let discrete_defect = heart_flux.integral(heart);
        Ok(SteadyDataset {
            u_e: NodalField::on(heart, h.u_e, Units::MilliVolt)?,
            u_i: NodalField::on(heart, h.u_i, Units::MilliVolt)?,
            v: NodalField::on(heart, h.v, Units::MilliVolt)?,
            heart_flux,
            torso_f: NodalField::on(torso, f, Units::MilliVolt)?,
            torso_flux: NodalField::zeros(torso, Units::MicroAmpPerCm2),
            c: self.c,
            discrete_compatibility: discrete_defect,
        })
    }
}

/// Heart-surface traces of the oracle.
#[derive(Debug, Clone)]
pub struct HeartTraces {
    pub u_e: Vec<f64>,
    pub u_i: Vec<f64>,
    pub v: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Oracle fields sampled on a pair of meshes, in the formats the pipeline
/// reads.
#[derive(Debug, Clone)]
pub struct SteadyDataset {
    pub u_e: NodalField,
    pub u_i: NodalField,
    pub v: NodalField,
    /// `ν·M_b∇u_b` on the heart (outward heart normal).
    pub heart_flux: NodalField,
    pub torso_f: NodalField,
    pub torso_flux: NodalField,
    pub c: f64,
    /// Lumped `∮ flux` on the heart mesh.
    pub discrete_compatibility: f64,
}

impl SteadyDataset {
    /// Writes `u_e`, `u_i`, `v`, `heart_flux`, `torso_f` and `torso_flux`
    /// (CSV plus JSON sidecar each) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, field) in [
            ("u_e", &self.u_e),
            ("u_i", &self.u_i),
            ("v", &self.v),
            ("heart_flux", &self.heart_flux),
            ("torso_f", &self.torso_f),
            ("torso_flux", &self.torso_flux),
        ] {
            field.save(&dir.join(name))?;
        }
        Ok(())
    }
}

/// Anything that can be compared sample by sample.
pub trait FieldSamples {
    fn samples(&self) -> &[f64];
    /// `(nodes, frames)`.
    fn shape(&self) -> (usize, usize);
}

impl FieldSamples for NodalField {
    fn samples(&self) -> &[f64] {
        self.values()
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

impl FieldSamples for SpaceTimeField {
    fn samples(&self) -> &[f64] {
        self.as_slice()
    }
    fn shape(&self) -> (usize, usize) {
        (self.nodes(), self.grid().frames())
    }
}

impl FieldSamples for [f64] {
    fn samples(&self) -> &[f64] {
        self
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

impl FieldSamples for Vec<f64> {
    fn samples(&self) -> &[f64] {
        self
    }
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }
}

/// Root mean square difference over all nodes and frames.
pub fn rmse<A: FieldSamples + ?Sized, B: FieldSamples + ?Sized>(rec: &A, truth: &B) -> Result<f64> {
    if rec.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} (nodes, frames) against {:?}",
            rec.shape(),
            truth.shape()
        )));
    }
    let a = rec.samples();
    let b = truth.samples();
    if a.is_empty() {
        return Err(Error::ShapeMismatch("empty fields".into()));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// `max − min` of the samples.
pub fn value_range<A: FieldSamples + ?Sized>(field: &A) -> f64 {
    let s = field.samples();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    fn paper_model() -> ConductivityModel {
        ConductivityModel::isotropic(12.0, 45.0, 7.0).unwrap().with_lambda(3.75).unwrap()
    }

    fn shell() -> HarmonicGeometry {
        HarmonicGeometry::Shell3D { r1: 1.0, r2: 2.0 }
    }

    fn single(l: usize, m: i32, a: f64) -> HarmonicSpec {
        HarmonicSpec {
            terms: vec![HarmonicTerm { l, m, a, b: 0.0 }],
            geometry: HarmonicGeometry::Sphere3D { r: 1.0 },
        }
    }

    #[test]
    fn degree_one_shell_coefficients() {
        let o = synth_bidomain_steady(shell(), &paper_model(), &single(1, 0, 1.0), 1.0).unwrap();
        let t = o.terms[0];
        assert!((t.ub_a - 0.2).abs() < 1e-14);
        assert!((t.ub_b - 0.8).abs() < 1e-14);
        assert!((t.flux + 1.4 * 7.0).abs() < 1e-12);
        let f = o.torso_trace(&[Point3::new(0.0, 0.0, 2.0)]);
        assert!((f[0] - 0.6).abs() < 1e-14, "{}", f[0]);
        assert!(o.residuals.transmission_value < 1e-12);
        assert!(o.residuals.transmission_flux < 1e-12);
        assert!(o.residuals.intracellular_flux < 1e-12);
        assert!(o.residuals.torso_flux < 1e-12);
        assert_eq!(o.c, 0.0);
    }

    #[test]
    fn traces_agree_with_interior_fields_at_the_heart() {
        let geometry = HarmonicGeometry::Shell3D { r1: 1.5, r2: 3.2 };
        let spec = HarmonicSpec {
            terms: vec![
                HarmonicTerm { l: 0, m: 0, a: 0.7, b: 0.0 },
                HarmonicTerm { l: 2, m: 1, a: 1.0, b: 0.2 },
            ],
            geometry,
        };
        let o = synth_bidomain_steady(geometry, &paper_model(), &spec, 0.5).unwrap();
        let x = Point3::new(0.6, -0.9, 0.8).normalize() * 1.5;
        let h = o.heart_traces(&[x]);
        let (expected, _) = eval_harmonic(&spec, &x).unwrap();
        assert!((h.u_e[0] - expected).abs() < 1e-12);
        assert!((h.u_e[0] - o.u_b(&x).unwrap()).abs() < 1e-12);
        assert!((h.u_i[0] - o.u_i(&x).unwrap()).abs() < 1e-12);
        assert!((h.v[0] - o.v(&x).unwrap()).abs() < 1e-12);
        let y = x * (3.2 / 1.5);
        assert!((o.torso_trace(&[y])[0] - o.u_b(&y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_gives_constant_fields() {
        let o = synth_bidomain_steady(shell(), &paper_model(), &single(0, 0, 2.5), 1.0).unwrap();
        let pts = [Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, -1.0, 0.0)];
        let h = o.heart_traces(&pts);
        assert_eq!(o.c, -2.5);
        for i in 0..2 {
            assert_eq!(h.u_e[i], 2.5);
            assert_eq!(h.u_i[i], -2.5);
            assert_eq!(h.v[i], -5.0);
            assert_eq!(h.flux[i], 0.0);
        }
        assert_eq!(o.torso_trace(&pts), vec![2.5, 2.5]);
    }

    #[test]
    fn interior_fields_satisfy_the_bidomain_equations() {
        let spec = HarmonicSpec {
            terms: vec![
                HarmonicTerm { l: 1, m: 1, a: 1.0, b: 0.0 },
                HarmonicTerm { l: 2, m: -1, a: 0.5, b: 0.0 },
                HarmonicTerm { l: 3, m: 2, a: -0.3, b: 0.0 },
            ],
            geometry: HarmonicGeometry::Sphere3D { r: 1.0 },
        };
        let o = synth_bidomain_steady(shell(), &paper_model(), &spec, 1.0).unwrap();
        let h = 1e-3;
        let lap = |f: &dyn Fn(&Point3) -> f64, x: &Point3| {
            let mut acc = -6.0 * f(x);
            for k in 0..3 {
                let mut e = Point3::zeros();
                e[k] = h;
                acc += f(&(x + e)) + f(&(x - e));
            }
            acc / (h * h)
        };
        let x = Point3::new(0.2, -0.3, 0.25);
        let ue = |y: &Point3| o.u_e(y).unwrap();
        let ui = |y: &Point3| o.u_i(y).unwrap();
        let ue_lap = lap(&ue, &x);
        // Δ_e u_e = −σ_e ∇²u_e
        assert!((o.delta_e_u_e(&x).unwrap() + 45.0 * ue_lap).abs() < 1e-4);
        // σ_i ∇²u_i + σ_e ∇²u_e = 0
        assert!((12.0 * lap(&ui, &x) + 45.0 * ue_lap).abs() < 1e-4);
        // u_b harmonic in the shell
        let ub = |y: &Point3| o.u_b(y).unwrap();
        assert!(lap(&ub, &Point3::new(0.9, 0.8, -0.7)).abs() < 1e-4);
        assert!(o.residuals.transmission_flux < 1e-12);
        assert!(o.residuals.intracellular_flux < 1e-12);
    }

    #[test]
    fn meshed_flux_is_nearly_compatible() {
        let heart = icosphere(1.0, 3, "heart");
        let torso = icosphere(2.0, 3, "torso");
        let domain = DomainConfig::new(heart, torso, 1e-6).unwrap();
        let o = synth_bidomain_steady(shell(), &paper_model(), &single(1, 0, 1.0), 1.0).unwrap();
        let d = o.sample(&domain).unwrap();
        let scale = 9.8 * domain.heart().total_area();
        assert!(d.discrete_compatibility.abs() < 1e-10 * scale);
        assert!(o.residuals.compatibility.abs() < 1e-15);
    }

    #[test]
    fn annulus_degree_one() {
        let model = ConductivityModel::isotropic(1.0, 1.0, 1.0).unwrap();
        let spec = HarmonicSpec {
            terms: vec![HarmonicTerm { l: 1, m: 1, a: 1.0, b: 0.0 }],
            geometry: HarmonicGeometry::Annulus2D { r1: 1.0, r2: 2.0 },
        };
        let o = synth_bidomain_steady(HarmonicGeometry::Annulus2D { r1: 1.0, r2: 2.0 }, &model, &spec, 1.0).unwrap();
        let t = o.terms[0];
        assert!((t.ub_a - 0.2).abs() < 1e-14 && (t.ub_b - 0.8).abs() < 1e-14);
        assert!((t.flux + 0.6).abs() < 1e-14);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let r = synth_bidomain_steady(shell(), &paper_model(), &single(9, 0, 1.0), 1.0);
        assert!(matches!(r, Err(Error::Resolvability { degree: 9, cap: 8 })));
    }

    #[test]
    fn rmse_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
        assert!((rmse(&b, &a).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(rmse(&a, &vec![1.0]), Err(Error::ShapeMismatch(_))));
        assert_eq!(value_range(&a), 2.0);
    }

    #[test]
    fn degree_orthogonality_on_meshed_sphere() {
        let s = icosphere(1.0, 4, "s");
        let w = s.vertex_weights();
        let ys: Vec<Vec<f64>> = (0..=4)
            .map(|l| s.vertices().iter().map(|x| surface_harmonic(l, 0, x)).collect())
            .collect();
        for l in 0..=4 {
            for k in (l + 1)..=4 {
                let ip: f64 = (0..w.len()).map(|i| w[i] * ys[l][i] * ys[k][i]).sum();
                assert!(ip.abs() < 1e-3, "l={l} k={k}: {ip}");
            }
        }
    }
}
