//! Binary cache format for assembled operators: a JSON header line followed
//! by the matrix as row-major little-endian `f64`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use faer::Mat;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerOperators, TargetDesc};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    kind: LayerKind,
    source_surface: String,
    target: TargetDesc,
    tensor: [[f64; 3]; 3],
}

pub fn save_operator(op: &LayerOperators, path: &Path) -> Result<()> {
    let header = Header {
        rows: op.rows(),
        cols: op.cols(),
        kind: op.kind,
        source_surface: op.source_surface.clone(),
        target: op.target.clone(),
        tensor: std::array::from_fn(|r| std::array::from_fn(|c| op.tensor[(r, c)])),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(8 * op.rows() * op.cols());
    for i in 0..op.rows() {
        for j in 0..op.cols() {
            bytes.extend_from_slice(&op.matrix[(i, j)].to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_operator(path: &Path) -> Result<LayerOperators> {
    let origin = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_slice(&line).map_err(|e| Error::parse(&origin, e.to_string()))?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() != 8 * header.rows * header.cols {
        return Err(Error::parse(
            &origin,
            format!("expected {} bytes of matrix data, found {}", 8 * header.rows * header.cols, body.len()),
        ));
    }
    let at = |i: usize, j: usize| {
        let o = 8 * (i * header.cols + j);
        f64::from_le_bytes(body[o..o + 8].try_into().expect("8-byte chunk"))
    };
    Ok(LayerOperators {
        kind: header.kind,
        source_surface: header.source_surface,
        target: header.target,
        tensor: Matrix3::from_fn(|r, c| header.tensor[r][c]),
        matrix: Mat::from_fn(header.rows, header.cols, at),
    })
}
