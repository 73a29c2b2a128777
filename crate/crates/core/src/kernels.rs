//! Fundamental solutions for the constant-coefficient operators used by the
//! boundary element machinery.
//!
//! Sign convention: the elliptic operator is `Δ_M = -∇·M∇` and its
//! fundamental solution satisfies `Δ_M φ_M = δ`, so `φ_M > 0`. With `M = I`
//! this is the Newtonian kernel `1 / (4π|x - y|)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point3;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Points closer than this are treated as coincident by the public kernels.
pub const SINGULAR_DISTANCE: f64 = 1e-14;

/// A constant symmetric positive definite conductivity tensor (mS/cm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductivity {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
    sqrt_det: f64,
}

impl Conductivity {
    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(Matrix3::identity() * sigma)
    }

    /// Rejects matrices that are not symmetric or whose smallest eigenvalue
    /// is not positive.
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("conductivity has non-finite entries".into()));
        }
        let scale = matrix.norm();
        if (matrix - matrix.transpose()).norm() > 1e-12 * scale {
            return Err(Error::Invalid("conductivity tensor is not symmetric".into()));
        }
        let eig = matrix.symmetric_eigenvalues();
        let min = eig.min();
        if !(min > 0.0) {
            return Err(Error::Invalid(format!(
                "conductivity tensor is not positive definite (smallest eigenvalue {min:e})"
            )));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::Invalid("conductivity tensor is singular".into()))?;
        Ok(Conductivity {
            matrix,
            inverse,
            sqrt_det: matrix.determinant().sqrt(),
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    /// Ellipticity constant: the smallest eigenvalue.
    pub fn ellipticity(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().min()
    }

    /// `Some(σ)` when the tensor is `σ I`.
    pub fn as_scalar(&self) -> Option<f64> {
        let s = self.matrix[(0, 0)];
        ((self.matrix - Matrix3::identity() * s).norm() <= 1e-14 * s.abs()).then_some(s)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.matrix * factor)
    }

    /// Anisotropic distance `sqrt(dᵀ M⁻¹ d)`.
    #[inline]
    pub fn metric_distance(&self, d: &Vector3<f64>) -> f64 {
        d.dot(&(self.inverse * d)).sqrt()
    }

    /// `φ_M` as a function of `d = x - y`, without the coincidence check.
    #[inline]
    pub fn green(&self, d: &Vector3<f64>) -> f64 {
        1.0 / (FOUR_PI * self.sqrt_det * self.metric_distance(d))
    }

    /// `n_yᵀ M ∇_y φ_M(x, y)` as a function of `d = x - y`.
    ///
    /// Since `∇_y φ_M = M⁻¹ d / (4π √det M ρ³)`, the tensor cancels against
    /// the conormal and only `n·d` survives.
    #[inline]
    pub fn green_conormal(&self, d: &Vector3<f64>, n_y: &Vector3<f64>) -> f64 {
        let rho = self.metric_distance(d);
        n_y.dot(d) / (FOUR_PI * self.sqrt_det * rho * rho * rho)
    }

    /// Conormal derivative `nᵀ M g` of a field with gradient `g`.
    #[inline]
    pub fn conormal(&self, n: &Vector3<f64>, grad: &Vector3<f64>) -> f64 {
        n.dot(&(self.matrix * grad))
    }
}

/// Conductivities of the intracellular, extracellular and extracardiac
/// media, with the proportionality ratio `λ` when `M_e = λ M_i`.
#[derive(Debug, Clone, Copy)]
pub struct ConductivityModel {
    pub intra: Conductivity,
    pub extra: Conductivity,
    pub bath: Conductivity,
    lambda: Option<f64>,
}

impl ConductivityModel {
    /// General (possibly non-proportional) tensors; `λ` is detected when the
    /// extracellular tensor is a multiple of the intracellular one.
    pub fn new(intra: Conductivity, extra: Conductivity, bath: Conductivity) -> Self {
        let ratio = extra.matrix().trace() / intra.matrix().trace();
        let lambda = proportional(&intra, &extra, ratio).then_some(ratio);
        ConductivityModel {
            intra,
            extra,
            bath,
            lambda,
        }
    }

    /// Isotropic media with scalar conductivities (mS/cm).
    pub fn isotropic(sigma_i: f64, sigma_e: f64, sigma_b: f64) -> Result<Self> {
        Ok(Self::new(
            Conductivity::isotropic(sigma_i)?,
            Conductivity::isotropic(sigma_e)?,
            Conductivity::isotropic(sigma_b)?,
        ))
    }

    /// Forces a given `λ`, checking `‖M_e − λ M_i‖ ≤ 1e-12 ‖M_e‖`.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !proportional(&self.intra, &self.extra, lambda) {
            return Err(Error::Invalid(format!(
                "extracellular tensor is not {lambda} times the intracellular tensor"
            )));
        }
        self.lambda = Some(lambda);
        Ok(self)
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn require_lambda(&self) -> Result<f64> {
        self.lambda
            .ok_or_else(|| Error::Invalid("the tensors are not proportional (no λ)".into()))
    }
}

fn proportional(intra: &Conductivity, extra: &Conductivity, lambda: f64) -> bool {
    (extra.matrix() - intra.matrix() * lambda).norm() <= 1e-12 * extra.matrix().norm()
}

pub fn elliptic_fundamental(m: &Conductivity, x: &Point3, y: &Point3) -> Result<f64> {
    let d = x - y;
    check_separated(&d)?;
    Ok(m.green(&d))
}

pub fn elliptic_conormal_kernel(
    m: &Conductivity,
    x: &Point3,
    y: &Point3,
    n_y: &Vector3<f64>,
) -> Result<f64> {
    let d = x - y;
    check_separated(&d)?;
    Ok(m.green_conormal(&d, n_y))
}

fn check_separated(d: &Vector3<f64>) -> Result<()> {
    let distance = d.norm();
    if distance < SINGULAR_DISTANCE {
        Err(Error::SingularPoint { distance })
    } else {
        Ok(())
    }
}

/// Constant-coefficient parabolic operator
/// `𝓛 u = ∂_t u − scale·∇·M∇u + a·∇u + a0·u`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeatOperatorSpec {
    pub m: [[f64; 3]; 3],
    pub drift: [f64; 3],
    pub reaction: f64,
    pub scale: f64,
}

impl HeatOperatorSpec {
    /// The plain heat operator `∂_t − Δ`.
    pub fn heat() -> Self {
        HeatOperatorSpec {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            drift: [0.0; 3],
            reaction: 0.0,
            scale: 1.0,
        }
    }

    /// Operator of the reduced cable equation: diffusion `M_e / (χ C_m (λ+1))`
    /// with drift `a / C_m` and reaction `a0 / C_m`.
    pub fn cable(
        extra: &Conductivity,
        lambda: f64,
        chi: f64,
        capacitance: f64,
        a: [f64; 3],
        a0: f64,
    ) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = extra.matrix()[(r, c)];
            }
        }
        HeatOperatorSpec {
            m,
            drift: a.map(|v| v / capacitance),
            reaction: a0 / capacitance,
            scale: 1.0 / (chi * capacitance * (lambda + 1.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.m.iter().flatten().all(|v| v.is_finite())
            && self.drift.iter().all(|v| v.is_finite())
            && self.reaction.is_finite()
            && self.scale.is_finite();
        if !finite {
            return Err(Error::Invalid("heat operator has non-finite coefficients".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Invalid("heat operator scale must be positive".into()));
        }
        self.diffusion().map(|_| ())
    }

    /// Effective diffusion tensor `scale·M`.
    pub fn diffusion(&self) -> Result<Conductivity> {
        Conductivity::new(Matrix3::from_fn(|r, c| self.m[r][c] * self.scale))
    }

    pub fn drift_vector(&self) -> Vector3<f64> {
        Vector3::from(self.drift)
    }

    pub fn is_pure_diffusion(&self) -> bool {
        self.drift == [0.0; 3] && self.reaction == 0.0
    }
}

/// Heat kernel of a [`HeatOperatorSpec`] with a precomputed diffusion tensor.
#[derive(Debug, Clone, Copy)]
pub struct HeatKernel {
    diffusion: Conductivity,
    drift: Vector3<f64>,
    reaction: f64,
}

impl HeatKernel {
    pub fn new(spec: &HeatOperatorSpec) -> Result<Self> {
        spec.validate()?;
        Ok(HeatKernel {
            diffusion: spec.diffusion()?,
            drift: spec.drift_vector(),
            reaction: spec.reaction,
        })
    }

    pub fn diffusion(&self) -> &Conductivity {
        &self.diffusion
    }

    pub fn drift(&self) -> &Vector3<f64> {
        &self.drift
    }

    pub fn reaction(&self) -> f64 {
        self.reaction
    }

    pub fn is_pure_diffusion(&self) -> bool {
        self.drift == Vector3::zeros() && self.reaction == 0.0
    }

    /// `Ψ(x, y, t, τ)` with `d = x − y` and `s = t − τ`; zero for `s ≤ 0`.
    ///
    /// For constant coefficients the drift is a Galilean shift and the
    /// reaction an exponential damping:
    /// `Ψ = e^{−a0 s} G_K(d − a s, s)` with `G_K` the Gaussian of
    /// covariance `2 s K`.
    #[inline]
    pub fn eval(&self, d: &Vector3<f64>, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let shifted = d - self.drift * s;
        let rho2 = shifted.dot(&(self.diffusion.inverse() * shifted));
        let norm = (FOUR_PI * s).powf(1.5) * self.diffusion.sqrt_det();
        (-self.reaction * s - rho2 / (4.0 * s)).exp() / norm
    }

    /// Dual conormal `(n·K∇_y + a·n) Ψ` entering the double-layer potential.
    #[inline]
    pub fn eval_conormal(&self, d: &Vector3<f64>, s: f64, n_y: &Vector3<f64>) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let shifted = d - self.drift * s;
        // ∇_y Ψ = Ψ K⁻¹ (d − a s) / (2 s)
        let psi = self.eval(d, s);
        psi * (n_y.dot(&shifted) / (2.0 * s) + self.drift.dot(n_y))
    }
}

/// Public wrapper: `Ψ(x, y, t, τ)` for the operator `spec`.
pub fn heat_kernel(spec: &HeatOperatorSpec, x: &Point3, y: &Point3, t: f64, tau: f64) -> Result<f64> {
    Ok(HeatKernel::new(spec)?.eval(&(x - y), t - tau))
}

/// 2D Laplace kernel `−ln|x − y| / (2π)`.
pub fn laplace_2d(x: &Vector2<f64>, y: &Vector2<f64>) -> Result<f64> {
    let r = (x - y).norm();
    if r < SINGULAR_DISTANCE {
        return Err(Error::SingularPoint { distance: r });
    }
    Ok(-r.ln() / (2.0 * std::f64::consts::PI))
}

/// Normal derivative in `y` of the 2D Laplace kernel.
pub fn laplace_2d_normal(x: &Vector2<f64>, y: &Vector2<f64>, n_y: &Vector2<f64>) -> Result<f64> {
    let d = x - y;
    let r2 = d.norm_squared();
    if r2.sqrt() < SINGULAR_DISTANCE {
        return Err(Error::SingularPoint { distance: r2.sqrt() });
    }
    Ok(n_y.dot(&d) / (2.0 * std::f64::consts::PI * r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng) -> Point3 {
        Point3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        )
    }

    #[test]
    fn laplace_kernel_at_unit_distance() {
        let id = Conductivity::isotropic(1.0).unwrap();
        let v = elliptic_fundamental(&id, &Point3::zeros(), &Point3::x()).unwrap();
        assert!((v - 1.0 / FOUR_PI).abs() < 1e-15);
        let four = Conductivity::isotropic(4.0).unwrap();
        let v = elliptic_fundamental(&four, &Point3::zeros(), &Point3::x()).unwrap();
        assert!((v - 1.0 / (16.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_kernel_matches_change_of_variables() {
        // y -> M^{-1/2} y maps Δ_M onto the Laplacian with Jacobian √det M
        let m = Matrix3::new(3.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.5);
        let c = Conductivity::new(m).unwrap();
        let eig = m.symmetric_eigen();
        let inv_sqrt = eig.eigenvectors
            * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = rand_point(&mut rng);
            let y = rand_point(&mut rng);
            let oracle = 1.0 / (FOUR_PI * m.determinant().sqrt() * (inv_sqrt * (x - y)).norm());
            let v = elliptic_fundamental(&c, &x, &y).unwrap();
            assert!((v - oracle).abs() < 1e-13 * oracle);
        }
    }

    #[test]
    fn anisotropic_kernel_has_unit_flux() {
        // ∮ n·M∇_y φ over a small sphere around x equals −1 (Δ_M φ = δ, outward flux)
        let m = Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 0.7);
        let c = Conductivity::new(m).unwrap();
        let sphere = crate::mesh::primitives::icosphere(0.05, 4, "s");
        let mut flux = 0.0;
        for t in 0..sphere.triangle_count() {
            let [a, b, cc] = sphere.triangle_points(t);
            let p = (a + b + cc) / 3.0;
            let n = p.normalize();
            // integration point y = x + p, so d = x − y = −p
            flux += c.green_conormal(&(-p), &n) * sphere.areas()[t];
        }
        assert!((flux + 1.0).abs() < 2e-3, "flux {flux}");
    }

    #[test]
    fn kernel_is_symmetric() {
        let c = Conductivity::new(Matrix3::new(2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = rand_point(&mut rng);
            let y = rand_point(&mut rng);
            let a = elliptic_fundamental(&c, &x, &y).unwrap();
            let b = elliptic_fundamental(&c, &y, &x).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn coincident_points_are_rejected() {
        let c = Conductivity::isotropic(1.0).unwrap();
        let x = Point3::new(1.0, 2.0, 3.0);
        assert!(matches!(elliptic_fundamental(&c, &x, &x), Err(Error::SingularPoint { .. })));
        assert!(matches!(
            elliptic_conormal_kernel(&c, &x, &x, &Point3::z()),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn conormal_kernel_values() {
        let id = Conductivity::isotropic(1.0).unwrap();
        let x = Point3::new(0.0, 0.0, 2.0);
        let y = Point3::new(0.0, 0.0, 1.0);
        let v = elliptic_conormal_kernel(&id, &x, &y, &Point3::z()).unwrap();
        assert!((v - 1.0 / FOUR_PI).abs() < 1e-15);
        let v = elliptic_conormal_kernel(&id, &x, &y, &Point3::x()).unwrap();
        assert_eq!(v, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = rand_point(&mut rng);
            let y = rand_point(&mut rng);
            let n = rand_point(&mut rng).normalize();
            let d = x - y;
            let cos = n.dot(&d) / d.norm();
            let oracle = cos / (FOUR_PI * d.norm_squared());
            let v = elliptic_conormal_kernel(&id, &x, &y, &n).unwrap();
            assert!((v - oracle).abs() < 1e-12 * oracle.abs().max(1e-3));
        }
    }

    #[test]
    fn rejects_indefinite_tensor() {
        assert!(Conductivity::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(Conductivity::new(Matrix3::new(1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn lambda_detection() {
        let m = ConductivityModel::isotropic(12.0, 45.0, 7.0).unwrap();
        assert!((m.lambda().unwrap() - 3.75).abs() < 1e-15);
        let aniso = ConductivityModel::new(
            Conductivity::new(Matrix3::from_diagonal(&Vector3::new(12.0, 1.33, 1.33))).unwrap(),
            Conductivity::new(Matrix3::from_diagonal(&Vector3::new(45.0, 5.0, 5.0))).unwrap(),
            Conductivity::isotropic(7.0).unwrap(),
        );
        assert!(aniso.lambda().is_none());
        assert!(aniso.with_lambda(3.75).is_err());
    }

    #[test]
    fn heat_kernel_causality_and_peak() {
        let spec = HeatOperatorSpec::heat();
        let x = Point3::new(0.3, 0.1, 0.0);
        assert_eq!(heat_kernel(&spec, &x, &x, 1.0, 1.1).unwrap(), 0.0);
        assert_eq!(heat_kernel(&spec, &x, &x, 1.0, 1.0).unwrap(), 0.0);
        let v = heat_kernel(&spec, &x, &x, 1.0, 0.0).unwrap();
        let expected = 1.0 / (8.0 * std::f64::consts::PI.powf(1.5));
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_kernels() {
        let x = Vector2::new(0.0, 0.0);
        let y = Vector2::new(1.0, 0.0);
        assert!(laplace_2d(&x, &y).unwrap().abs() < 1e-16);
        let n = Vector2::new(-1.0, 0.0);
        let v = laplace_2d_normal(&x, &y, &n).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }
}
