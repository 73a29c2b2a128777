//! Real solid harmonics with exact gradients.
//!
//! Normalisation: Schmidt semi-normalised, no Condon–Shortley phase.
//! `Y_l0 = P_l(cos θ)`, and for `m > 0`
//! `Y_lm = √(2 (l−m)!/(l+m)!) P_l^m(cos θ) cos mφ`,
//! `Y_l,−m = √(2 (l−m)!/(l+m)!) P_l^m(cos θ) sin mφ`.
//! The regular solid harmonic is `R_lm = r^l Y_lm`, a homogeneous harmonic
//! polynomial; the irregular one is `I_lm = r^{−l−1} Y_lm = R_lm / r^{2l+1}`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 8;

type V3 = Vector3<f64>;

#[derive(Clone, Copy)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    const ZERO: C = C { re: 0.0, im: 0.0 };
    fn mul(self, o: C) -> C {
        C {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    fn scale(self, s: f64) -> C {
        C {
            re: self.re * s,
            im: self.im * s,
        }
    }
    fn add(self, o: C) -> C {
        C {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

/// Complex value with a complex gradient.
#[derive(Clone, Copy)]
struct Cg {
    v: C,
    g: [C; 3],
}

impl Cg {
    const ZERO: Cg = Cg {
        v: C::ZERO,
        g: [C::ZERO; 3],
    };
    fn scale(self, s: f64) -> Cg {
        Cg {
            v: self.v.scale(s),
            g: self.g.map(|c| c.scale(s)),
        }
    }
    fn add(self, o: Cg) -> Cg {
        Cg {
            v: self.v.add(o.v),
            g: std::array::from_fn(|k| self.g[k].add(o.g[k])),
        }
    }
    /// Product rule with a real function `f` of gradient `df`.
    fn mul_real(self, f: f64, df: V3) -> Cg {
        Cg {
            v: self.v.scale(f),
            g: std::array::from_fn(|k| self.g[k].scale(f).add(self.v.scale(df[k]))),
        }
    }
}

/// `(value, gradient)` of `R_lm` at `x` for `l ≤ MAX_DEGREE`.
pub fn regular_solid(l: usize, m: i32, x: &V3) -> (f64, V3) {
    assert!(l <= MAX_DEGREE && m.unsigned_abs() as usize <= l);
    let ma = m.unsigned_abs() as usize;
    let q = complex_solid(l, ma, x);
    let norm = if ma == 0 {
        1.0
    } else {
        let ratio: f64 = ((l - ma + 1)..=(l + ma)).map(|k| k as f64).product();
        (2.0 / ratio).sqrt()
    };
    let pick = |c: C| if m >= 0 { c.re } else { c.im };
    (norm * pick(q.v), V3::new(norm * pick(q.g[0]), norm * pick(q.g[1]), norm * pick(q.g[2])))
}

/// `Q_l^m = r^l P_l^m(cos θ) e^{imφ}` by the Cartesian recurrences
/// `Q_m^m = (2m−1)!! (x + iy)^m`, `Q_{m+1}^m = (2m+1) z Q_m^m`,
/// `(l−m) Q_l^m = (2l−1) z Q_{l−1}^m − (l+m−1) r² Q_{l−2}^m`.
fn complex_solid(l: usize, m: usize, x: &V3) -> Cg {
    let w = C { re: x.x, im: x.y };
    // (x + iy)^m and its gradient m (x + iy)^{m−1} (1, i, 0)
    let mut pow = C { re: 1.0, im: 0.0 };
    let mut pow_prev = C::ZERO;
    for _ in 0..m {
        pow_prev = pow;
        pow = pow.mul(w);
    }
    let dfact: f64 = (1..=m).map(|k| (2 * k - 1) as f64).product();
    let dpow = if m == 0 { C::ZERO } else { pow_prev.scale(m as f64) };
    let qmm = Cg {
        v: pow,
        g: [dpow, dpow.mul(C { re: 0.0, im: 1.0 }), C::ZERO],
    }
    .scale(dfact);
    if l == m {
        return qmm;
    }
    let z = x.z;
    let ez = V3::new(0.0, 0.0, 1.0);
    let r2 = x.norm_squared();
    let mut prev2 = Cg::ZERO;
    let mut prev = qmm;
    for k in (m + 1)..=l {
        let a = prev.mul_real(z, ez).scale((2 * k - 1) as f64);
        let b = prev2.mul_real(r2, 2.0 * x).scale(-((k + m - 1) as f64));
        let next = a.add(b).scale(1.0 / (k - m) as f64);
        prev2 = prev;
        prev = next;
    }
    prev
}

/// `(value, gradient)` of `I_lm = R_lm / r^{2l+1}`.
pub fn irregular_solid(l: usize, m: i32, x: &V3) -> (f64, V3) {
    let (v, g) = regular_solid(l, m, x);
    let r2 = x.norm_squared();
    let p = (2 * l + 1) as f64;
    let inv = r2.powf(-p / 2.0);
    (v * inv, g * inv - x * (p * v * inv / r2))
}

/// Surface harmonic `Y_lm` at the direction of `x`.
pub fn surface_harmonic(l: usize, m: i32, x: &V3) -> f64 {
    regular_solid(l, m, &x.normalize()).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub l: usize,
    pub m: i32,
    /// Coefficient of the growing part `r^l` (or `r^l` times a trigonometric
    /// factor in 2D).
    pub a: f64,
    /// Coefficient of the decaying part `r^{−l−1}` (2D: `r^{−l}`, or
    /// `ln r` for `l = 0`).
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HarmonicGeometry {
    Sphere3D { r: f64 },
    Shell3D { r1: f64, r2: f64 },
    Annulus2D { r1: f64, r2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub terms: Vec<HarmonicTerm>,
    pub geometry: HarmonicGeometry,
}

/// Relative slack allowed when testing whether a point lies in the geometry.
const GEOMETRY_SLACK: f64 = 1e-9;

impl HarmonicSpec {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.l > MAX_DEGREE {
                return Err(Error::Resolvability {
                    degree: t.l,
                    cap: MAX_DEGREE,
                });
            }
            if !t.a.is_finite() || !t.b.is_finite() {
                return Err(Error::Invalid("harmonic coefficients must be finite".into()));
            }
            let two_d = matches!(self.geometry, HarmonicGeometry::Annulus2D { .. });
            let bad_order = if two_d {
                !(t.m == 0 && t.l == 0 || (t.l >= 1 && (t.m == 1 || t.m == -1)))
            } else {
                t.m.unsigned_abs() as usize > t.l
            };
            if bad_order {
                return Err(Error::Invalid(format!("invalid order m = {} for degree {}", t.m, t.l)));
            }
        }
        let ok = match self.geometry {
            HarmonicGeometry::Sphere3D { r } => r > 0.0,
            HarmonicGeometry::Shell3D { r1, r2 } | HarmonicGeometry::Annulus2D { r1, r2 } => r1 > 0.0 && r2 > r1,
        };
        if !ok {
            return Err(Error::Invalid("invalid oracle geometry radii".into()));
        }
        Ok(())
    }

    fn contains(&self, x: &V3) -> bool {
        match self.geometry {
            HarmonicGeometry::Sphere3D { r } => x.norm() <= r * (1.0 + GEOMETRY_SLACK),
            HarmonicGeometry::Shell3D { r1, r2 } => {
                let n = x.norm();
                n >= r1 * (1.0 - GEOMETRY_SLACK) && n <= r2 * (1.0 + GEOMETRY_SLACK)
            }
            HarmonicGeometry::Annulus2D { r1, r2 } => {
                let n = x.xy().norm();
                n >= r1 * (1.0 - GEOMETRY_SLACK) && n <= r2 * (1.0 + GEOMETRY_SLACK)
            }
        }
    }
}

/// Value and gradient of the harmonic expansion at `x`.
///
/// 3D: `Σ (a r^l + b r^{−l−1}) Y_lm`. 2D (the z component is ignored):
/// `Σ (a r^l + b r^{−l}) cos lθ` for `m = 1`, `sin lθ` for `m = −1`, and
/// `a + b ln r` for `l = 0`.
pub fn eval_harmonic(spec: &HarmonicSpec, x: &V3) -> Result<(f64, V3)> {
    spec.validate()?;
    if !spec.contains(x) {
        return Err(Error::OutOfGeometry([x.x, x.y, x.z]));
    }
    let mut value = 0.0;
    let mut grad = V3::zeros();
    match spec.geometry {
        HarmonicGeometry::Annulus2D { .. } => {
            for t in &spec.terms {
                let (v, g) = harmonic_2d(t, x.x, x.y);
                value += v;
                grad += V3::new(g[0], g[1], 0.0);
            }
        }
        _ => {
            for t in &spec.terms {
                if t.a != 0.0 {
                    let (v, g) = regular_solid(t.l, t.m, x);
                    value += t.a * v;
                    grad += g * t.a;
                }
                if t.b != 0.0 {
                    let (v, g) = irregular_solid(t.l, t.m, x);
                    value += t.b * v;
                    grad += g * t.b;
                }
            }
        }
    }
    Ok((value, grad))
}

pub(crate) fn harmonic_2d(t: &HarmonicTerm, x: f64, y: f64) -> (f64, [f64; 2]) {
    let r2 = x * x + y * y;
    if t.l == 0 {
        // a + b ln r
        return (t.a + 0.5 * t.b * r2.ln(), [t.b * x / r2, t.b * y / r2]);
    }
    // r^l e^{ilθ} = (x + iy)^l; its real/imaginary parts are harmonic
    let l = t.l as i32;
    let (mut re, mut im) = (1.0, 0.0);
    let (mut pre, mut pim) = (0.0, 0.0);
    for _ in 0..l {
        pre = re;
        pim = im;
        let nre = re * x - im * y;
        im = re * y + im * x;
        re = nre;
    }
    // d/dx (x+iy)^l = l (x+iy)^{l−1}, d/dy = i l (x+iy)^{l−1}
    let (dre_x, dim_x) = (l as f64 * pre, l as f64 * pim);
    let (dre_y, dim_y) = (-l as f64 * pim, l as f64 * pre);
    let (v, gx, gy) = if t.m >= 0 { (re, dre_x, dre_y) } else { (im, dim_x, dim_y) };
    // r^{−l} trig = (r^l trig) / r^{2l}
    let inv = r2.powi(-l);
    let dinv = [-2.0 * l as f64 * inv * x / r2, -2.0 * l as f64 * inv * y / r2];
    let value = t.a * v + t.b * v * inv;
    let gxx = t.a * gx + t.b * (gx * inv + v * dinv[0]);
    let gyy = t.a * gy + t.b * (gy * inv + v * dinv[1]);
    (value, [gxx, gyy])
}
