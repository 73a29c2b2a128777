use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use super::config::{require_file, RunConfig};
use super::report::{report_table, ReportRow};
use crate::bem::VolumeGrid;
use crate::checks::{caloric_check, green_check as run_green_check, heat_kernel_check, CaloricResolution};
use crate::error::{Error, Result};
use crate::field::{read_json, NodalField, SpaceTimeField, Units};
use crate::kernels::{ConductivityModel, HeatOperatorSpec};
use crate::mesh::primitives::icosphere;
use crate::mesh::{load_mesh, save_mesh_json, DomainConfig, MeshFormat, Point3, SurfaceMesh};
use crate::oracle::{rmse, synth_bidomain_steady, value_range, HarmonicGeometry, HarmonicSpec, HarmonicTerm};
use crate::reconstruction::{
    certify_nullspace, generate_nullspace_element, Bump, Protocol2Pipeline, ReconstructionOutput, SteadyPipeline,
};

type Outcome = (Vec<String>, Value);

const CONTAINMENT_TOLERANCE: f64 = 1e-6;
const MAX_SUBDIVISIONS: usize = 5;
const NULLSPACE_TOLERANCE: f64 = 1e-3;
const CHECK_TOLERANCE: f64 = 0.02;

/// Adds zero-mean Gaussian noise with standard deviation `level · max|values|`
/// from a ChaCha8 stream seeded with `seed`.
pub fn add_noise(values: &[f64], level: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noisy(values, level, &mut rng)
}

fn noisy(values: &[f64], level: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Invalid(format!("noise level {level}")));
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if level == 0.0 || peak == 0.0 {
        return Ok(values.to_vec());
    }
    let normal = Normal::new(0.0, level * peak).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(values.iter().map(|v| v + normal.sample(rng)).collect())
}

fn shell_radii(c: &RunConfig) -> Result<(f64, f64)> {
    if c.geometry != "shell" {
        return Err(Error::Invalid(format!(
            "geometry '{}' is not available from the command line (use 'shell')",
            c.geometry
        )));
    }
    if !(c.r1 > 0.0 && c.r2 > c.r1 && c.r2.is_finite()) {
        return Err(Error::Invalid("radii need 0 < r1 < r2".into()));
    }
    if c.subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::Invalid(format!("subdivisions capped at {MAX_SUBDIVISIONS}")));
    }
    Ok((c.r1, c.r2))
}

fn create_out(c: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    Ok(&c.out)
}

fn read_mesh(path: &Path, id: &str) -> Result<SurfaceMesh> {
    let format = MeshFormat::from_extension(path)
        .ok_or_else(|| Error::Invalid(format!("unknown mesh format for {}", path.display())))?;
    Ok(load_mesh(path, format)?.with_surface_id(id))
}

fn read_domain(c: &RunConfig) -> Result<DomainConfig> {
    let heart = read_mesh(&c.heart_mesh_path()?, "heart")?;
    let torso = read_mesh(&c.torso_mesh_path()?, "torso")?;
    DomainConfig::new(heart, torso, CONTAINMENT_TOLERANCE)
}

/// Field stored on the heart or torso; the surface id is taken from the
/// mesh the command works with.
fn read_field(stem: &Path, id: &str) -> Result<NodalField> {
    let f = NodalField::load(stem)?;
    NodalField::new(id, f.values().to_vec(), f.units())
}

fn model_with_lambda(c: &RunConfig) -> Result<ConductivityModel> {
    let model = c.model()?;
    model.require_lambda()?;
    Ok(model)
}

fn save_output(out: &ReconstructionOutput, dir: &Path, heart: &SurfaceMesh) -> Result<Vec<String>> {
    out.save(dir, heart)?;
    let mut files: Vec<String> = ["u_e", "u_i", "v", "heart_flux"]
        .iter()
        .flat_map(|n| [format!("{n}.csv"), format!("{n}.json")])
        .collect();
    files.push("heart.vtk".into());
    if out.cauchy.is_some() {
        files.push("lcurve.csv".into());
    }
    files.push("reconstruction.json".into());
    Ok(files)
}

pub fn synth(c: &RunConfig) -> Result<Outcome> {
    let (r1, r2) = shell_radii(c)?;
    let model = model_with_lambda(c)?;
    let geometry = HarmonicGeometry::Shell3D { r1, r2 };
    let spec = HarmonicSpec {
        terms: vec![HarmonicTerm {
            l: c.degree,
            m: c.order,
            a: c.amplitude,
            b: 0.0,
        }],
        geometry,
    };
    spec.validate()?;
    let oracle = synth_bidomain_steady(geometry, &model, &spec, c.c0)?;
    let domain = DomainConfig::new(
        icosphere(r1, c.subdivisions, "heart"),
        icosphere(r2, c.subdivisions, "torso"),
        CONTAINMENT_TOLERANCE,
    )?;
    let data = oracle.sample(&domain)?;
    let dir = create_out(c)?;
    save_mesh_json(domain.heart(), &dir.join("heart.json"))?;
    save_mesh_json(domain.torso(), &dir.join("torso.json"))?;
    data.save(dir)?;
    let mut files = vec!["heart.json".to_string(), "torso.json".to_string()];
    for n in ["u_e", "u_i", "v", "heart_flux", "torso_f", "torso_flux"] {
        files.push(format!("{n}.csv"));
        files.push(format!("{n}.json"));
    }
    let summary = format!(
        "synthetic shell: {} heart and {} torso nodes, v range {:.3} mV\n",
        domain.heart().vertex_count(),
        domain.torso().vertex_count(),
        value_range(&data.v)
    );
    Ok((
        files,
        json!({
            "heart_nodes": domain.heart().vertex_count(),
            "torso_nodes": domain.torso().vertex_count(),
            "lambda": oracle.lambda,
            "c": oracle.c,
            "mean_trace": oracle.mean_trace,
            "v_range": value_range(&data.v),
            "discrete_compatibility": data.discrete_compatibility,
            "oracle_residuals": oracle.residuals,
            "summary": summary,
        }),
    ))
}

pub fn reconstruct_p1(c: &RunConfig) -> Result<Outcome> {
    let model = model_with_lambda(c)?;
    let u_e_path = c.data_field("u_e")?;
    let domain = read_domain(c)?;
    let u_e = read_field(&u_e_path, domain.heart().surface_id())?;
    u_e.check_on(domain.heart())?;
    let pipeline = SteadyPipeline::new(&domain, &model, c.c0)?;
    let out = pipeline.run(&u_e)?;
    let files = save_output(&out, create_out(c)?, domain.heart())?;
    let summary = format!(
        "protocol 1: c = {:.6}, v range {:.3} mV\n",
        out.c,
        value_range(&out.v)
    );
    Ok((
        files,
        json!({
            "c": out.c,
            "lambda": out.lambda,
            "diagnostics": out.diagnostics,
            "summary": summary,
        }),
    ))
}

/// Sidecar frame count of a stored field; `None` for a single frame.
fn stored_frames(stem: &Path) -> Result<Option<usize>> {
    let meta: Value = read_json(&stem.with_extension("json"))?;
    Ok(meta.get("frames").and_then(Value::as_u64).map(|n| n as usize))
}

pub fn reconstruct_p2(c: &RunConfig) -> Result<Outcome> {
    let model = model_with_lambda(c)?;
    let tikhonov = c.tikhonov()?;
    let f_path = c.data_field("torso_f")?;
    let flux_path = c.data.as_ref().map(|d| d.join("torso_flux"));
    let flux_path = match flux_path {
        Some(p) if p.with_extension("csv").is_file() => {
            require_file(&p.with_extension("json"))?;
            Some(p)
        }
        _ => None,
    };
    let domain = read_domain(c)?;
    let torso_id = domain.torso().surface_id().to_string();
    let torso_flux = flux_path.map(|p| read_field(&p, &torso_id)).transpose()?;
    if let Some(q) = &torso_flux {
        q.check_on(domain.torso())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let dir = create_out(c)?;

    if let Some(frames) = stored_frames(&f_path)? {
        let series = SpaceTimeField::load(&f_path)?;
        if series.nodes() != domain.torso().vertex_count() {
            return Err(Error::ShapeMismatch("torso data does not match the torso mesh".into()));
        }
        let pipeline = Protocol2Pipeline::new(&domain, &model, tikhonov, c.c0)?;
        let mut v = Vec::with_capacity(frames);
        let mut u_i = Vec::with_capacity(frames);
        let mut u_e = Vec::with_capacity(frames);
        let mut used = Vec::with_capacity(frames);
        let mut alphas = Vec::with_capacity(frames);
        for k in 0..frames {
            let values = noisy(series.frame(k), c.noise, &mut rng)?;
            let f = NodalField::new(&torso_id, values.clone(), series.units())?;
            let out = pipeline.run(&f, torso_flux.as_ref())?;
            alphas.push(out.diagnostics.cauchy.as_ref().map(|s| s.chosen_alpha));
            used.push(values);
            v.push(out.v.into_values());
            u_i.push(out.u_i.into_values());
            u_e.push(out.u_e.into_values());
        }
        let grid = *series.grid();
        let mut files = Vec::new();
        for (name, frames, units) in [
            ("v", v, Units::MilliVolt),
            ("u_i", u_i, Units::MilliVolt),
            ("u_e", u_e, Units::MilliVolt),
            ("torso_f_used", used, series.units()),
        ] {
            SpaceTimeField::from_frames(name, grid, frames, units)?.save(&dir.join(name))?;
            files.push(format!("{name}.csv"));
            files.push(format!("{name}.json"));
        }
        let summary = format!("protocol 2: {frames} frames reconstructed\n");
        return Ok((files, json!({ "frames": frames, "chosen_alpha": alphas, "summary": summary })));
    }

    let f = read_field(&f_path, &torso_id)?;
    f.check_on(domain.torso())?;
    let f = NodalField::new(&torso_id, noisy(f.values(), c.noise, &mut rng)?, f.units())?;
    let pipeline = Protocol2Pipeline::new(&domain, &model, tikhonov, c.c0)?;
    let out = pipeline.run(&f, torso_flux.as_ref())?;
    let mut files = save_output(&out, dir, domain.heart())?;
    f.save(&dir.join("torso_f_used"))?;
    files.push("torso_f_used.csv".into());
    files.push("torso_f_used.json".into());
    let alpha = out.diagnostics.cauchy.as_ref().map(|s| s.chosen_alpha);
    let summary = format!(
        "protocol 2: alpha = {:e}, c = {:.6}, v range {:.3} mV\n",
        alpha.unwrap_or(f64::NAN),
        out.c,
        value_range(&out.v)
    );
    Ok((
        files,
        json!({
            "c": out.c,
            "lambda": out.lambda,
            "chosen_alpha": alpha,
            "diagnostics": out.diagnostics,
            "summary": summary,
        }),
    ))
}

pub fn nullspace(c: &RunConfig) -> Result<Outcome> {
    let model = model_with_lambda(c)?;
    let [x, y, z] = c.bump_center;
    let bump = Bump::CubicRadial {
        center: Point3::new(x, y, z),
        radius: c.bump_radius,
        amplitude: c.amplitude,
    };
    bump.validate()?;
    if !(c.grid_step > 0.0 && c.grid_step.is_finite()) {
        return Err(Error::Invalid("grid_step must be positive".into()));
    }
    let domain = if c.data.is_some() || c.heart_mesh.is_some() {
        read_domain(c)?
    } else {
        let (r1, r2) = shell_radii(c)?;
        DomainConfig::new(
            icosphere(r1, c.subdivisions, "heart"),
            icosphere(r2, c.subdivisions, "torso"),
            CONTAINMENT_TOLERANCE,
        )?
    };
    let grid = VolumeGrid::inside_mesh(domain.heart(), c.grid_step)?;
    let element = generate_nullspace_element(domain.heart(), &grid, &model, bump, c.proportional)?;
    let cert = certify_nullspace(&element, &domain, &model)?;
    let dir = create_out(c)?;
    save_mesh_json(domain.heart(), &dir.join("heart.json"))?;
    save_mesh_json(domain.torso(), &dir.join("torso.json"))?;
    let v = NodalField::new(
        element.u_i.surface_id(),
        element.u_i.values().iter().zip(element.u_e.values()).map(|(a, b)| a - b).collect(),
        Units::MilliVolt,
    )?;
    let mut files = vec!["heart.json".to_string(), "torso.json".to_string()];
    for (name, field) in [("u_e", &element.u_e), ("u_i", &element.u_i), ("u_b", &element.u_b), ("v", &v)] {
        field.save(&dir.join(name))?;
        files.push(format!("{name}.csv"));
        files.push(format!("{name}.json"));
    }
    let pass = cert.torso_silent(NULLSPACE_TOLERANCE);
    let summary = format!(
        "null-space element: torso sup {:.3e} (Green), {:.3e} (Zaremba), amplitude {}\n",
        cert.torso_green_max, cert.torso_zaremba_max, cert.amplitude
    );
    Ok((
        files,
        json!({
            "c": element.c,
            "clearance": element.clearance,
            "interior_max": element.interior_max,
            "certificate": cert,
            "pass": pass,
            "summary": summary,
        }),
    ))
}

fn load_v(dir: &Path) -> Result<NodalField> {
    let stem = dir.join("v");
    require_file(&stem.with_extension("csv"))?;
    require_file(&stem.with_extension("json"))?;
    NodalField::load(&stem)
}

fn compare(truth: &NodalField, rec: &NodalField) -> Result<f64> {
    if truth.len() != rec.len() {
        return Err(Error::ShapeMismatch(format!(
            "reconstruction has {} nodes, truth has {}",
            rec.len(),
            truth.len()
        )));
    }
    rmse(rec, truth)
}

pub fn eval(c: &RunConfig) -> Result<Outcome> {
    let truth_dir = c.truth.as_ref().ok_or_else(|| Error::Invalid("eval needs --truth".into()))?;
    if c.p1.is_none() && c.p2.is_none() {
        return Err(Error::Invalid("eval needs --p1 or --p2".into()));
    }
    let truth = load_v(truth_dir)?;
    let p1 = c.p1.as_ref().map(|d| load_v(d)).transpose()?;
    let p2 = c.p2.as_ref().map(|d| load_v(d)).transpose()?;
    let e1 = p1.as_ref().map(|r| compare(&truth, r)).transpose()?;
    let e2 = p2.as_ref().map(|r| compare(&truth, r)).transpose()?;
    let range = value_range(&truth);
    let row = ReportRow {
        label: c.label.clone(),
        protocol1: e1,
        protocol2: e2,
    };
    let mut summary = report_table(std::slice::from_ref(&row));
    for (name, e) in [("protocol 1", e1), ("protocol 2", e2)] {
        if let Some(e) = e {
            let rel = if range > 0.0 { 100.0 * e / range } else { 0.0 };
            let _ = writeln!(summary, "{name}: rmse {e:.3} mV ({rel:.2}% of v range)");
        }
    }
    let dir = create_out(c)?;
    let path = dir.join("report.txt");
    std::fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    Ok((
        vec!["report.txt".into()],
        json!({
            "v_range": range,
            "rows": [row],
            "relative_p1": e1.map(|e| e / range),
            "relative_p2": e2.map(|e| e / range),
            "summary": summary,
        }),
    ))
}

pub fn green_check(c: &RunConfig) -> Result<Outcome> {
    if c.subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::Invalid(format!("subdivisions capped at {MAX_SUBDIVISIONS}")));
    }
    create_out(c)?;
    let check = run_green_check(c.subdivisions)?;
    let summary = format!(
        "green identity on {} triangles: interior {:.2e}, exterior {:.2e}: {}\n",
        check.triangles,
        check.interior_relative,
        check.exterior_max,
        if check.pass { "pass" } else { "FAIL" }
    );
    Ok((Vec::new(), json!({ "check": check, "pass": check.pass, "summary": summary })))
}

pub fn heat_check(c: &RunConfig) -> Result<Outcome> {
    if c.subdivisions > MAX_SUBDIVISIONS || c.subdivisions == 0 {
        return Err(Error::Invalid(format!("subdivisions must lie in 1..={MAX_SUBDIVISIONS}")));
    }
    if !(c.grid_step > 0.0 && c.grid_step.is_finite()) || c.time_steps < 2 {
        return Err(Error::Invalid("need grid_step > 0 and time_steps >= 2".into()));
    }
    let model = model_with_lambda(c)?;
    create_out(c)?;
    let lambda = model.require_lambda()?;
    let cable = HeatOperatorSpec::cable(&model.extra, lambda, 1.0, 1.0, [0.0; 3], 0.0);
    let kernels = [heat_kernel_check(&HeatOperatorSpec::heat(), 0.5)?, heat_kernel_check(&cable, 0.01)?];
    let fine = caloric_check(CaloricResolution {
        subdivisions: c.subdivisions,
        grid_step: c.grid_step,
        time_steps: c.time_steps,
    })?;
    let coarse = caloric_check(CaloricResolution {
        subdivisions: c.subdivisions - 1,
        grid_step: 2.0 * c.grid_step,
        time_steps: (c.time_steps / 2).max(2),
    })?;
    let caloric_pass = fine.relative_inside <= CHECK_TOLERANCE
        && fine.relative_outside <= CHECK_TOLERANCE
        && fine.relative_inside < coarse.relative_inside;
    let pass = caloric_pass && kernels.iter().all(|k| k.pass);
    let summary = format!(
        "heat kernel: {}; caloric identity {:.4} (error {:.2e}, coarse {:.2e}, outside {:.2e}): {}\n",
        if kernels.iter().all(|k| k.pass) { "pass" } else { "FAIL" },
        fine.value_inside,
        fine.relative_inside,
        coarse.relative_inside,
        fine.relative_outside,
        if pass { "pass" } else { "FAIL" }
    );
    Ok((
        Vec::new(),
        json!({ "kernels": kernels, "caloric_fine": fine, "caloric_coarse": coarse, "pass": pass, "summary": summary }),
    ))
}
