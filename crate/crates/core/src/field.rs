//! Nodal and space-time fields with their CSV/JSON storage formats.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "mV")]
    MilliVolt,
    #[serde(rename = "mV/cm")]
    MilliVoltPerCm,
    #[serde(rename = "uA/cm^2")]
    MicroAmpPerCm2,
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

/// Per-vertex values on a named surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalField {
    surface_id: String,
    values: Vec<f64>,
    units: Units,
}

impl NodalField {
    pub fn new(surface_id: impl Into<String>, values: Vec<f64>, units: Units) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("field value at node {i} is not finite")));
        }
        Ok(NodalField {
            surface_id: surface_id.into(),
            values,
            units,
        })
    }

    /// Field on `mesh`, checking the length against its vertex count.
    pub fn on(mesh: &SurfaceMesh, values: Vec<f64>, units: Units) -> Result<Self> {
        let f = Self::new(mesh.surface_id(), values, units)?;
        f.check_on(mesh)?;
        Ok(f)
    }

    pub fn zeros(mesh: &SurfaceMesh, units: Units) -> Self {
        NodalField {
            surface_id: mesh.surface_id().to_string(),
            values: vec![0.0; mesh.vertex_count()],
            units,
        }
    }

    /// Samples `f` at every vertex of `mesh`.
    pub fn sample(mesh: &SurfaceMesh, units: Units, f: impl Fn(&crate::mesh::Point3) -> f64) -> Result<Self> {
        Self::on(mesh, mesh.vertices().iter().map(f).collect(), units)
    }

    pub fn check_on(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.values.len() != mesh.vertex_count() {
            return Err(Error::ShapeMismatch(format!(
                "field on '{}' has {} values but surface '{}' has {} vertices",
                self.surface_id,
                self.values.len(),
                mesh.surface_id(),
                mesh.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn surface_id(&self) -> &str {
        &self.surface_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.surface_id.clone(), self.values.iter().map(|&v| f(v)).collect(), self.units)
    }

    /// Lumped surface integral `Σ w_i u_i`.
    pub fn integral(&self, mesh: &SurfaceMesh) -> f64 {
        mesh.vertex_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            // `{:?}` prints the shortest representation that round-trips exactly
            let _ = writeln!(s, "{i},{v:?}");
        }
        s
    }

    pub fn from_csv(text: &str, surface_id: &str, units: Units, origin: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "node_index,value" => {}
            _ => return Err(Error::parse(origin, "expected header 'node_index,value'")),
        }
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(origin, format!("row {row}: expected two columns")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, format!("row {row}: bad node index")))?;
            if idx != values.len() {
                return Err(Error::parse(origin, format!("row {row}: node indices must be 0, 1, 2, ...")));
            }
            let val: f64 = val
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, format!("row {row}: bad value")))?;
            values.push(val);
        }
        Self::new(surface_id, values, units).map_err(|e| Error::parse(origin, e.to_string()))
    }

    /// Writes `<stem>.csv` and the sidecar `<stem>.json`.
    pub fn save(&self, path_stem: &Path) -> Result<()> {
        let csv = path_stem.with_extension("csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let manifest = FieldManifest {
            surface_id: self.surface_id.clone(),
            units: self.units,
            nodes: self.values.len(),
            frames: None,
            time_grid: None,
        };
        write_json(&path_stem.with_extension("json"), &manifest)
    }

    /// Reads a field from `<stem>.csv`, taking the surface and units from the
    /// sidecar `<stem>.json`.
    pub fn load(path_stem: &Path) -> Result<Self> {
        let manifest: FieldManifest = read_json(&path_stem.with_extension("json"))?;
        let csv = path_stem.with_extension("csv");
        let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
        let f = Self::from_csv(&text, &manifest.surface_id, manifest.units, &csv.display().to_string())?;
        if f.len() != manifest.nodes {
            return Err(Error::parse(
                csv.display().to_string(),
                format!("manifest declares {} nodes, file has {}", manifest.nodes, f.len()),
            ));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldManifest {
    surface_id: String,
    units: Units,
    nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_grid: Option<TimeGrid>,
}

/// Uniform grid `t_k = k T / steps`, `k = 0..=steps`, in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Invalid("time grid end must be positive".into()));
        }
        if steps < 2 {
            return Err(Error::Invalid("time grid needs at least two steps".into()));
        }
        Ok(TimeGrid { t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn frames(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_end * k as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.frames()).map(|k| self.time(k)).collect()
    }
}

/// Values at a fixed set of sample points (surface vertices or grid cells)
/// for every frame of a [`TimeGrid`]; stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    label: String,
    grid: TimeGrid,
    nodes: usize,
    data: Vec<f64>,
    units: Units,
}

impl SpaceTimeField {
    pub fn zeros(label: impl Into<String>, nodes: usize, grid: TimeGrid, units: Units) -> Self {
        SpaceTimeField {
            label: label.into(),
            grid,
            nodes,
            data: vec![0.0; nodes * grid.frames()],
            units,
        }
    }

    /// Builds a field from per-frame node vectors.
    pub fn from_frames(label: impl Into<String>, grid: TimeGrid, frames: Vec<Vec<f64>>, units: Units) -> Result<Self> {
        if frames.len() != grid.frames() {
            return Err(Error::ShapeMismatch(format!(
                "{} frames given for a grid of {}",
                frames.len(),
                grid.frames()
            )));
        }
        let nodes = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != nodes) {
            return Err(Error::ShapeMismatch("frames have different node counts".into()));
        }
        let data: Vec<f64> = frames.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("space-time field has non-finite values".into()));
        }
        Ok(SpaceTimeField {
            label: label.into(),
            grid,
            nodes,
            data,
            units,
        })
    }

    /// Samples `f(node, t)`.
    pub fn sample(
        label: impl Into<String>,
        nodes: usize,
        grid: TimeGrid,
        units: Units,
        f: impl Fn(usize, f64) -> f64,
    ) -> Result<Self> {
        let frames = (0..grid.frames())
            .map(|k| (0..nodes).map(|i| f(i, grid.time(k))).collect())
            .collect();
        Self::from_frames(label, grid, frames, units)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn get(&self, node: usize, k: usize) -> f64 {
        self.data[k * self.nodes + node]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// CSV matrix: one row per node, one column per frame.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_index");
        for k in 0..self.grid.frames() {
            let _ = write!(s, ",t{k}");
        }
        s.push('\n');
        for i in 0..self.nodes {
            let _ = write!(s, "{i}");
            for k in 0..self.grid.frames() {
                let _ = write!(s, ",{:?}", self.get(i, k));
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path_stem: &Path) -> Result<()> {
        let csv = path_stem.with_extension("csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let manifest = FieldManifest {
            surface_id: self.label.clone(),
            units: self.units,
            nodes: self.nodes,
            frames: Some(self.grid.frames()),
            time_grid: Some(self.grid),
        };
        write_json(&path_stem.with_extension("json"), &manifest)
    }

    pub fn load(path_stem: &Path) -> Result<Self> {
        let manifest: FieldManifest = read_json(&path_stem.with_extension("json"))?;
        let csv = path_stem.with_extension("csv");
        let origin = csv.display().to_string();
        let grid = manifest
            .time_grid
            .ok_or_else(|| Error::parse(&origin, "manifest has no time grid"))?;
        let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        lines.next().ok_or_else(|| Error::parse(&origin, "empty file"))?;
        let mut frames = vec![Vec::with_capacity(manifest.nodes); grid.frames()];
        for (row, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != grid.frames() + 1 {
                return Err(Error::parse(&origin, format!("row {row}: expected {} columns", grid.frames() + 1)));
            }
            for (k, c) in cols[1..].iter().enumerate() {
                let v: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&origin, format!("row {row}: bad value")))?;
                frames[k].push(v);
            }
        }
        let f = Self::from_frames(manifest.surface_id, grid, frames, manifest.units)?;
        if f.nodes != manifest.nodes {
            return Err(Error::parse(&origin, "node count disagrees with the manifest"));
        }
        Ok(f)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}
