use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Conductivity;
use crate::mesh::inside;
use crate::mesh::{Point3, SurfaceMesh};

/// Cells within this many cell diameters of a target are refined.
const NEAR_CELLS: f64 = 1.0;
/// Sub-cells per axis used for refined cells.
const SUBDIVISION: usize = 4;

/// Regular Cartesian grid of cubic cells with a membership mask; a cell
/// belongs to the domain when its centre does.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    origin: Point3,
    spacing: f64,
    dims: [usize; 3],
    mask: Vec<bool>,
}

impl VolumeGrid {
    /// Grid over the box `[lo, hi]` keeping cells whose centre satisfies
    /// `member`.
    pub fn new(lo: Point3, hi: Point3, spacing: f64, member: impl Fn(&Point3) -> bool + Sync) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Invalid("grid spacing must be positive".into()));
        }
        let dims: [usize; 3] = std::array::from_fn(|k| (((hi[k] - lo[k]) / spacing).ceil().max(1.0)) as usize);
        let mut grid = VolumeGrid {
            origin: lo,
            spacing,
            dims,
            mask: Vec::new(),
        };
        let n = dims[0] * dims[1] * dims[2];
        grid.mask = (0..n).into_par_iter().map(|c| member(&grid.center(c))).collect();
        Ok(grid)
    }

    /// Cells of the bounding box of `mesh` whose centres the mesh encloses.
    pub fn inside_mesh(mesh: &SurfaceMesh, spacing: f64) -> Result<Self> {
        let (lo, hi) = mesh.bbox();
        Self::new(lo, hi, spacing, |x| inside(mesh, x))
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Corner of the first cell.
    pub fn origin(&self) -> Point3 {
        self.origin
    }

    /// Cell containing `x`, if it lies in the grid box.
    pub fn locate(&self, x: &Point3) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for k in 0..3 {
            let f = ((x[k] - self.origin[k]) / self.spacing).floor();
            if !(f >= 0.0 && (f as usize) < self.dims[k]) {
                return None;
            }
            ijk[k] = f as usize;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.mask.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn ijk(&self, c: usize) -> [usize; 3] {
        let i = c % self.dims[0];
        let j = (c / self.dims[0]) % self.dims[1];
        let k = c / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, c: usize) -> Point3 {
        let [i, j, k] = self.ijk(c);
        self.origin + Point3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.spacing
    }

    pub fn is_member(&self, c: usize) -> bool {
        self.mask[c]
    }

    /// Indices of the member cells.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.mask.len()).filter(|&c| self.mask[c])
    }

    pub fn member_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Samples `f` at every member cell centre (zero elsewhere).
    pub fn sample(&self, f: impl Fn(&Point3) -> f64 + Sync) -> GridSamples {
        let values = (0..self.mask.len())
            .into_par_iter()
            .map(|c| if self.mask[c] { f(&self.center(c)) } else { 0.0 })
            .collect();
        GridSamples {
            grid: self.clone(),
            values,
        }
    }

    /// Whether all six face neighbours of `c` are members.
    pub fn is_interior(&self, c: usize) -> bool {
        self.neighbours(c).is_some_and(|nb| nb.iter().all(|&n| self.mask[n]))
    }

    fn neighbours(&self, c: usize) -> Option<[usize; 6]> {
        let [i, j, k] = self.ijk(c);
        let [nx, ny, nz] = self.dims;
        if i == 0 || j == 0 || k == 0 || i + 1 >= nx || j + 1 >= ny || k + 1 >= nz {
            return None;
        }
        Some([
            self.index(i - 1, j, k),
            self.index(i + 1, j, k),
            self.index(i, j - 1, k),
            self.index(i, j + 1, k),
            self.index(i, j, k - 1),
            self.index(i, j, k + 1),
        ])
    }
}

/// A scalar field sampled at the member cells of a [`VolumeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    pub grid: VolumeGrid,
    pub values: Vec<f64>,
}

impl GridSamples {
    /// Gradient at the member cells: central differences where both
    /// neighbours are members, one-sided where only one is, zero otherwise.
    pub fn gradient(&self) -> Vec<Point3> {
        let g = &self.grid;
        let h = g.spacing;
        (0..self.values.len())
            .into_par_iter()
            .map(|c| {
                if !g.mask[c] {
                    return Point3::zeros();
                }
                let ijk = g.ijk(c);
                let mut out = Point3::zeros();
                for axis in 0..3 {
                    let step = |s: i64| -> Option<usize> {
                        let mut n = ijk.map(|v| v as i64);
                        n[axis] += s;
                        if n[axis] < 0 || n[axis] as usize >= g.dims[axis] {
                            return None;
                        }
                        let idx = g.index(n[0] as usize, n[1] as usize, n[2] as usize);
                        g.mask[idx].then_some(idx)
                    };
                    out[axis] = match (step(-1), step(1)) {
                        (Some(a), Some(b)) => (self.values[b] - self.values[a]) / (2.0 * h),
                        (None, Some(b)) => (self.values[b] - self.values[c]) / h,
                        (Some(a), None) => (self.values[c] - self.values[a]) / h,
                        (None, None) => 0.0,
                    };
                }
                out
            })
            .collect()
    }

    /// Midpoint-rule integral over the member cells.
    pub fn integral(&self) -> f64 {
        self.grid.members().map(|c| self.values[c]).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.grid.members().map(|c| self.values[c].abs()).fold(0.0, f64::max)
    }

    /// `Δ_M u = −∇·M∇u` by second-order central differences (including
    /// mixed derivatives for anisotropic `M`). Cells whose stencil leaves the
    /// domain take the value of their nearest interior neighbour.
    pub fn apply_operator(&self, m: &Conductivity) -> GridSamples {
        let g = &self.grid;
        let h = g.spacing;
        let mm = m.matrix();
        let u = &self.values;
        let [nx, ny, _] = g.dims;
        let mut out = vec![0.0; u.len()];
        let mut have = vec![false; u.len()];
        for c in g.members() {
            let [i, j, k] = g.ijk(c);
            let stencil_ok = i >= 1
                && j >= 1
                && k >= 1
                && i + 1 < nx
                && j + 1 < ny
                && k + 1 < g.dims[2]
                && (-1i64..=1)
                    .flat_map(|a| (-1i64..=1).flat_map(move |b| (-1i64..=1).map(move |d| (a, b, d))))
                    .all(|(a, b, d)| g.mask[g.index((i as i64 + a) as usize, (j as i64 + b) as usize, (k as i64 + d) as usize)]);
            if !stencil_ok {
                continue;
            }
            let at = |a: i64, b: i64, d: i64| u[g.index((i as i64 + a) as usize, (j as i64 + b) as usize, (k as i64 + d) as usize)];
            let unit = |axis: usize, s: i64| -> (i64, i64, i64) {
                match axis {
                    0 => (s, 0, 0),
                    1 => (0, s, 0),
                    _ => (0, 0, s),
                }
            };
            let mut div = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    let coef = mm[(p, q)];
                    if coef == 0.0 {
                        continue;
                    }
                    let d2 = if p == q {
                        let (a, b, d) = unit(p, 1);
                        (at(a, b, d) - 2.0 * at(0, 0, 0) + at(-a, -b, -d)) / (h * h)
                    } else {
                        let (a1, b1, d1) = unit(p, 1);
                        let (a2, b2, d2) = unit(q, 1);
                        (at(a1 + a2, b1 + b2, d1 + d2) - at(a1 - a2, b1 - b2, d1 - d2) - at(a2 - a1, b2 - b1, d2 - d1)
                            + at(-a1 - a2, -b1 - b2, -d1 - d2))
                            / (4.0 * h * h)
                    };
                    div += coef * d2;
                }
            }
            out[c] = -div;
            have[c] = true;
        }
        // boundary layer: quadratic extrapolation along a grid direction,
        // else the nearest cell with a full stencil
        let members: Vec<usize> = g.members().collect();
        let mut directions: Vec<(i64, i64, i64)> = (-1i64..=1)
            .flat_map(|a| (-1i64..=1).flat_map(move |b| (-1i64..=1).map(move |d| (a, b, d))))
            .filter(|&d| d != (0, 0, 0))
            .collect();
        directions.sort_by_key(|&(a, b, d)| a * a + b * b + d * d);
        let cell = |i: usize, j: usize, k: usize, a: i64, b: i64, d: i64| -> Option<usize> {
            let (ii, jj, kk) = (i as i64 + a, j as i64 + b, k as i64 + d);
            if ii < 0 || jj < 0 || kk < 0 || ii as usize >= nx || jj as usize >= ny || kk as usize >= g.dims[2] {
                return None;
            }
            Some(g.index(ii as usize, jj as usize, kk as usize))
        };
        let fill: Vec<(usize, f64)> = members
            .par_iter()
            .filter(|&&c| !have[c])
            .map(|&c| {
                let [i, j, k] = g.ijk(c);
                let mut sum = 0.0;
                let mut count = 0usize;
                let mut length = 0;
                for &(a, b, d) in &directions {
                    let len = a * a + b * b + d * d;
                    if count > 0 && len > length {
                        break;
                    }
                    let line: Option<Vec<usize>> = (1..=3).map(|s| cell(i, j, k, s * a, s * b, s * d)).collect();
                    if let Some(line) = line {
                        if line.iter().all(|&n| have[n]) {
                            sum += 3.0 * out[line[0]] - 3.0 * out[line[1]] + out[line[2]];
                            count += 1;
                            length = len;
                        }
                    }
                }
                if count > 0 {
                    return (c, sum / count as f64);
                }
                let mut best = (f64::INFINITY, 0.0);
                for r in 1..=4i64 {
                    for a in -r..=r {
                        for b in -r..=r {
                            for d in -r..=r {
                                if let Some(n) = cell(i, j, k, a, b, d) {
                                    let dist = (a * a + b * b + d * d) as f64;
                                    if have[n] && dist < best.0 {
                                        best = (dist, out[n]);
                                    }
                                }
                            }
                        }
                    }
                    if best.0.is_finite() {
                        break;
                    }
                }
                (c, best.1)
            })
            .collect();
        for (c, v) in fill {
            out[c] = v;
        }
        GridSamples {
            grid: self.grid.clone(),
            values: out,
        }
    }
}

/// Values of `T g` at the targets together with a bound on the part of
/// the integral omitted around each target.
#[derive(Debug, Clone)]
pub struct VolumePotential {
    pub values: Vec<f64>,
    pub omitted_bound: f64,
}

/// `T_{D,M} g(x) = ∫_D φ_M(x, y) g(y) dy` by the midpoint rule. Cells near a
/// target are split into sub-cells; sub-cells within one sub-cell diameter
/// of the target are skipped and bounded by the integral of `φ_M` over a
/// ball of the same volume.
pub fn volume_potential(m: &Conductivity, g: &GridSamples, targets: &[Point3]) -> Result<VolumePotential> {
    let grid = &g.grid;
    let members: Vec<usize> = grid.members().collect();
    if members.is_empty() {
        return Err(Error::EmptySupport);
    }
    let h = grid.spacing;
    let diam = h * 3f64.sqrt();
    let vol = grid.cell_volume();
    let sub = SUBDIVISION as f64;
    let sub_h = h / sub;
    let sub_diam = diam / sub;
    let sub_vol = vol / sub.powi(3);
    let ball = |v: f64| -> f64 {
        // ∫_ball 1/(4π r) over the ball of volume v, scaled for M
        let r = (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt();
        r * r / (2.0 * m.ellipticity())
    };
    let results: Vec<(f64, f64)> = targets
        .par_iter()
        .map(|x| {
            let mut acc = 0.0;
            let mut skipped_vol = 0.0;
            let mut skipped_max: f64 = 0.0;
            for &c in &members {
                let gv = g.values[c];
                if gv == 0.0 {
                    continue;
                }
                let y = grid.center(c);
                let d = x - y;
                if d.norm() >= NEAR_CELLS * diam {
                    acc += m.green(&d) * gv * vol;
                    continue;
                }
                for a in 0..SUBDIVISION {
                    for b in 0..SUBDIVISION {
                        for e in 0..SUBDIVISION {
                            let off = Point3::new(a as f64 + 0.5, b as f64 + 0.5, e as f64 + 0.5) * sub_h - Point3::repeat(h / 2.0);
                            let ds = x - (y + off);
                            if ds.norm() < sub_diam {
                                skipped_vol += sub_vol;
                                skipped_max = skipped_max.max(gv.abs());
                            } else {
                                acc += m.green(&ds) * gv * sub_vol;
                            }
                        }
                    }
                }
            }
            let bound = if skipped_vol > 0.0 { skipped_max * ball(skipped_vol) } else { 0.0 };
            (acc, bound)
        })
        .collect();
    let omitted_bound = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let values: Vec<f64> = results.into_iter().map(|r| r.0).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure("volume potential".into()));
    }
    Ok(VolumePotential { values, omitted_bound })
}
