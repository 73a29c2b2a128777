use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("kernel evaluated at coincident points (|x - y| = {distance:e})")]
    SingularPoint { distance: f64 },

    #[error("quadrature produced a non-finite value ({0})")]
    QuadratureFailure(String),

    #[error("no grid cell lies inside the integration domain")]
    EmptySupport,

    #[error("evaluation point lies on the boundary (distance {distance:e})")]
    PointOnBoundary { distance: f64 },

    #[error("evaluation point lies on the surface (distance {distance:e})")]
    PointOnSurface { distance: f64 },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("incompatible Neumann data: defect {defect:e} exceeds tolerance {tolerance:e}")]
    IncompatibleData { defect: f64, tolerance: f64 },

    #[error("every regularization parameter in the grid produced a non-finite solution")]
    AllAlphaFailed,

    #[error("L-curve has no point of positive curvature")]
    DegenerateLCurve,

    #[error("interior samples are required: {0}")]
    MissingInteriorData(String),

    #[error("bump support reaches the boundary (clearance {clearance:e})")]
    SupportTouchesBoundary { clearance: f64 },

    #[error("point {0:?} lies outside the oracle geometry")]
    OutOfGeometry([f64; 3]),

    #[error("harmonic degree {degree} exceeds the cap {cap}")]
    Resolvability { degree: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than by a failing solve.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Geometry(_)
                | Error::Invalid(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::ShapeMismatch(_)
                | Error::OutOfGeometry(_)
                | Error::Resolvability { .. }
                | Error::SupportTouchesBoundary { .. }
                | Error::MissingInteriorData(_)
                | Error::PointOnBoundary { .. }
                | Error::PointOnSurface { .. }
        )
    }
}
