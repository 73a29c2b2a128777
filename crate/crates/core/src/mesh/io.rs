//! Mesh readers and writers: OFF, legacy ASCII VTK POLYDATA and a small
//! JSON schema `{"vertices": [[x,y,z],...], "triangles": [[i,j,k],...],
//! "surface_id": "..."}` with 0-based indices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point3, SurfaceMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Json,
    VtkLegacyAscii,
}

impl MeshFormat {
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "json" => Some(MeshFormat::Json),
            "vtk" => Some(MeshFormat::VtkLegacyAscii),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    surface_id: String,
}

/// Reads a mesh. Normals and areas are always recomputed from geometry.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let default_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("surface")
        .to_string();
    let (vertices, triangles, id) = match format {
        MeshFormat::Off => {
            let (v, t) = parse_off(&text).map_err(|m| Error::parse(&name, m))?;
            (v, t, default_id)
        }
        MeshFormat::Json => {
            let m: JsonMesh =
                serde_json::from_str(&text).map_err(|e| Error::parse(&name, e.to_string()))?;
            let v = m.vertices.iter().map(|p| Point3::from(*p)).collect();
            (v, m.triangles, m.surface_id)
        }
        MeshFormat::VtkLegacyAscii => {
            let (v, t) = parse_vtk(&text).map_err(|m| Error::parse(&name, m))?;
            (v, t, default_id)
        }
    };
    SurfaceMesh::new(vertices, triangles, id)
}

pub fn mesh_to_json(mesh: &SurfaceMesh) -> String {
    let m = JsonMesh {
        vertices: mesh.vertices().iter().map(|v| [v.x, v.y, v.z]).collect(),
        triangles: mesh.triangles().to_vec(),
        surface_id: mesh.surface_id().to_string(),
    };
    serde_json::to_string(&m).expect("mesh serializes")
}

pub fn save_mesh_json(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    fs::write(path, mesh_to_json(mesh)).map_err(|e| Error::io(path, e))
}

pub fn mesh_to_off(mesh: &SurfaceMesh) -> String {
    let mut s = String::from("OFF\n");
    let _ = writeln!(s, "{} {} 0", mesh.vertex_count(), mesh.triangle_count());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Legacy ASCII VTK POLYDATA with optional per-vertex scalar arrays.
pub fn mesh_to_vtk(mesh: &SurfaceMesh, point_data: &[(&str, &[f64])]) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{}", mesh.surface_id());
    s.push_str("ASCII\nDATASET POLYDATA\n");
    let _ = writeln!(s, "POINTS {} double", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "POLYGONS {} {}", mesh.triangle_count(), 4 * mesh.triangle_count());
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.vertex_count());
        for (name, values) in point_data {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in *values {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    s
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> std::result::Result<T, String> {
    let tok = tok.ok_or_else(|| format!("unexpected end of file reading {what}"))?;
    tok.parse()
        .map_err(|_| format!("cannot parse {what} from '{tok}'"))
}

fn parse_off(text: &str) -> std::result::Result<(Vec<Point3>, Vec<[usize; 3]>), String> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let header = tokens.next().ok_or("empty file")?;
    if header != "OFF" {
        return Err(format!("expected 'OFF' header, found '{header}'"));
    }
    let nv: usize = parse_num(tokens.next(), "vertex count")?;
    let nf: usize = parse_num(tokens.next(), "face count")?;
    let _ne: usize = parse_num(tokens.next(), "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_num(tokens.next(), "vertex coordinate")?;
        let y = parse_num(tokens.next(), "vertex coordinate")?;
        let z = parse_num(tokens.next(), "vertex coordinate")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let n: usize = parse_num(tokens.next(), "face size")?;
        if n != 3 {
            return Err(format!("face {f} has {n} vertices; only triangles are supported"));
        }
        let a = parse_num(tokens.next(), "face index")?;
        let b = parse_num(tokens.next(), "face index")?;
        let c = parse_num(tokens.next(), "face index")?;
        triangles.push([a, b, c]);
    }
    Ok((vertices, triangles))
}

fn parse_vtk(text: &str) -> std::result::Result<(Vec<Point3>, Vec<[usize; 3]>), String> {
    let mut lines = text.lines();
    let version = lines.next().ok_or("empty file")?;
    if !version.starts_with("# vtk DataFile") {
        return Err("missing '# vtk DataFile' header".into());
    }
    lines.next().ok_or("missing title line")?;
    let encoding = lines.next().ok_or("missing encoding line")?.trim();
    if encoding != "ASCII" {
        return Err(format!("only ASCII encoding is supported, found '{encoding}'"));
    }
    let rest: Vec<&str> = lines.flat_map(str::split_whitespace).collect();
    let mut tokens = rest.into_iter();
    if tokens.next() != Some("DATASET") || tokens.next() != Some("POLYDATA") {
        return Err("only 'DATASET POLYDATA' is supported".into());
    }
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    while let Some(keyword) = tokens.next() {
        match keyword {
            "POINTS" => {
                let n: usize = parse_num(tokens.next(), "point count")?;
                let _ty = tokens.next().ok_or("missing point type")?;
                for _ in 0..n {
                    let x = parse_num(tokens.next(), "point coordinate")?;
                    let y = parse_num(tokens.next(), "point coordinate")?;
                    let z = parse_num(tokens.next(), "point coordinate")?;
                    vertices.push(Point3::new(x, y, z));
                }
            }
            "POLYGONS" => {
                let n: usize = parse_num(tokens.next(), "polygon count")?;
                let _size: usize = parse_num(tokens.next(), "polygon list size")?;
                for p in 0..n {
                    let k: usize = parse_num(tokens.next(), "polygon size")?;
                    if k != 3 {
                        return Err(format!("polygon {p} has {k} vertices; only triangles are supported"));
                    }
                    let a = parse_num(tokens.next(), "polygon index")?;
                    let b = parse_num(tokens.next(), "polygon index")?;
                    let c = parse_num(tokens.next(), "polygon index")?;
                    triangles.push([a, b, c]);
                }
            }
            // attribute sections follow the geometry; nothing after them is needed
            "POINT_DATA" | "CELL_DATA" => break,
            other => return Err(format!("unsupported section '{other}'")),
        }
    }
    if vertices.is_empty() {
        return Err("no POINTS section".into());
    }
    if triangles.is_empty() {
        return Err("no POLYGONS section".into());
    }
    Ok((vertices, triangles))
}
