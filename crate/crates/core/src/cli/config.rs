//! Resolved run parameters. Sources in increasing priority: defaults, a
//! flat `key = value` file, command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cauchy::{AlphaSelection, Penalty, TikhonovConfig};
use crate::error::{Error, Result};
use crate::kernels::ConductivityModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// Directory holding `heart.json`, `torso.json` and the field files.
    pub data: Option<PathBuf>,
    pub heart_mesh: Option<PathBuf>,
    pub torso_mesh: Option<PathBuf>,

    /// mS/cm.
    pub sigma_li: f64,
    pub sigma_le: f64,
    pub m_b: f64,
    pub c0: f64,

    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_count: usize,
    /// `lcurve`, `fixed:<alpha>` or `discrepancy:<noise level>`.
    pub selection: String,
    /// `identity` or `gradient`.
    pub penalty: String,
    /// Gaussian noise on the torso potential, as a fraction of its peak
    /// magnitude.
    pub noise: f64,
    pub seed: u64,

    pub geometry: String,
    pub r1: f64,
    pub r2: f64,
    pub subdivisions: usize,
    pub degree: usize,
    pub order: i32,
    pub amplitude: f64,

    pub bump_center: [f64; 3],
    pub bump_radius: f64,
    pub grid_step: f64,
    pub proportional: bool,

    pub truth: Option<PathBuf>,
    pub p1: Option<PathBuf>,
    pub p2: Option<PathBuf>,
    pub label: String,

    pub time_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TikhonovConfig::default();
        RunConfig {
            out: PathBuf::from("out"),
            data: None,
            heart_mesh: None,
            torso_mesh: None,
            sigma_li: 12.0,
            sigma_le: 45.0,
            m_b: 7.0,
            c0: 1.0,
            alpha_min: t.alpha_min,
            alpha_max: t.alpha_max,
            alpha_count: t.count,
            selection: "lcurve".into(),
            penalty: "identity".into(),
            noise: 0.0,
            seed: 0,
            geometry: "shell".into(),
            r1: 1.0,
            r2: 2.0,
            subdivisions: 3,
            degree: 1,
            order: 0,
            amplitude: 1.0,
            bump_center: [0.0; 3],
            bump_radius: 0.5,
            grid_step: 0.05,
            proportional: true,
            truth: None,
            p1: None,
            p2: None,
            label: "heart".into(),
            time_steps: 20,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("bad value '{value}' for '{key}'")))
}

fn parse_point(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Invalid(format!("'{key}' expects x,y,z")));
    }
    let mut p = [0.0; 3];
    for (slot, s) in p.iter_mut().zip(parts) {
        *slot = parse(key, s)?;
    }
    Ok(p)
}

impl RunConfig {
    /// Sets one parameter from its textual form; keys use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let path = || Some(PathBuf::from(value));
        match key.as_str() {
            "out" => self.out = PathBuf::from(value),
            "data" => self.data = path(),
            "heart_mesh" => self.heart_mesh = path(),
            "torso_mesh" => self.torso_mesh = path(),
            "sigma_li" => self.sigma_li = parse(&key, value)?,
            "sigma_le" => self.sigma_le = parse(&key, value)?,
            "m_b" => self.m_b = parse(&key, value)?,
            "c0" => self.c0 = parse(&key, value)?,
            "alpha_min" => self.alpha_min = parse(&key, value)?,
            "alpha_max" => self.alpha_max = parse(&key, value)?,
            "alpha_count" => self.alpha_count = parse(&key, value)?,
            "selection" => self.selection = value.to_string(),
            "penalty" => self.penalty = value.to_string(),
            "noise" => self.noise = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "geometry" => self.geometry = value.to_string(),
            "r1" => self.r1 = parse(&key, value)?,
            "r2" => self.r2 = parse(&key, value)?,
            "subdivisions" => self.subdivisions = parse(&key, value)?,
            "degree" | "l" => self.degree = parse(&key, value)?,
            "order" | "m" => self.order = parse(&key, value)?,
            "amplitude" => self.amplitude = parse(&key, value)?,
            "bump_center" => self.bump_center = parse_point(&key, value)?,
            "bump_radius" => self.bump_radius = parse(&key, value)?,
            "grid_step" => self.grid_step = parse(&key, value)?,
            "proportional" => self.proportional = parse(&key, value)?,
            "truth" => self.truth = path(),
            "p1" => self.p1 = path(),
            "p2" => self.p2 = path(),
            "label" => self.label = value.to_string(),
            "time_steps" => self.time_steps = parse(&key, value)?,
            _ => return Err(Error::Invalid(format!("unknown parameter '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v).map_err(|e| Error::parse(origin, format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Makes every path absolute so the manifest replays from anywhere.
    pub fn absolutize(&mut self) -> Result<()> {
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(&*p).map_err(|e| Error::io(&*p, e))?;
            Ok(())
        };
        abs(&mut self.out)?;
        for p in [
            &mut self.data,
            &mut self.heart_mesh,
            &mut self.torso_mesh,
            &mut self.truth,
            &mut self.p1,
            &mut self.p2,
        ]
        .into_iter()
        .flatten()
        {
            abs(p)?;
        }
        Ok(())
    }

    /// Checks the values shared by every command.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_li", self.sigma_li), ("sigma_le", self.sigma_le), ("m_b", self.m_b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.c0.is_finite() {
            return Err(Error::Invalid("c0 must be finite".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Invalid("noise must be a non-negative fraction".into()));
        }
        Ok(())
    }

    /// Isotropic model `M_i = σ_li`, `M_e = σ_le`, `M_b = m_b`.
    pub fn model(&self) -> Result<ConductivityModel> {
        self.validate()?;
        ConductivityModel::isotropic(self.sigma_li, self.sigma_le, self.m_b)
    }

    pub fn tikhonov(&self) -> Result<TikhonovConfig> {
        let selection = match self.selection.split_once(':') {
            None if self.selection == "lcurve" => AlphaSelection::LCurveMaxCurvature,
            Some(("fixed", a)) => AlphaSelection::FixedAlpha(parse("selection", a)?),
            Some(("discrepancy", n)) => AlphaSelection::DiscrepancyPrinciple(parse("selection", n)?),
            _ => return Err(Error::Invalid(format!("unknown alpha selection '{}'", self.selection))),
        };
        let penalty = match self.penalty.as_str() {
            "identity" => Penalty::Identity,
            "gradient" => Penalty::SurfaceGradient,
            p => return Err(Error::Invalid(format!("unknown penalty '{p}'"))),
        };
        let config = TikhonovConfig {
            count: self.alpha_count,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            selection,
            penalty,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn heart_mesh_path(&self) -> Result<PathBuf> {
        self.mesh_path(&self.heart_mesh, "heart")
    }

    pub fn torso_mesh_path(&self) -> Result<PathBuf> {
        self.mesh_path(&self.torso_mesh, "torso")
    }

    fn mesh_path(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = match (explicit, &self.data) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.join(format!("{name}.json")),
            (None, None) => return Err(Error::Invalid(format!("no {name} mesh: pass --{name}-mesh or --data"))),
        };
        require_file(&p)?;
        Ok(p)
    }

    /// `<data>/<name>` as a field path stem, after checking that its files
    /// exist.
    pub fn data_field(&self, name: &str) -> Result<PathBuf> {
        let dir = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Invalid("no input data: pass --data".into()))?;
        let stem = dir.join(name);
        require_file(&stem.with_extension("csv"))?;
        require_file(&stem.with_extension("json"))?;
        Ok(stem)
    }
}

pub fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("missing file {}", p.display())))
    }
}
