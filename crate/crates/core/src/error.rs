use std::fmt;

/// Coarse failure classes, used for the status column of sweep reports and
/// for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Parameter,
    Geometry,
    Numerical,
    Io,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Config => "config",
            ErrorClass::Parameter => "parameter",
            ErrorClass::Geometry => "geometry",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("height profile is not positive: h({x}) = {h}")]
    NonPositiveHeight { x: f64, h: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("eigenvalues {index} and {next} are within {gap:e} of each other")]
    DegenerateSpectrum { index: usize, next: usize, gap: f64 },

    #[error("branch crossing at epsilon = {epsilon}: best overlap {overlap}")]
    BranchCrossing { epsilon: f64, overlap: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("fixed-point map is not contracting: ratios {ratios:?}")]
    NonContraction { ratios: Vec<f64> },

    #[error("overlap <u1, phi> = {overlap:e} is below threshold {threshold:e}")]
    SmallOverlap { overlap: f64, threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorClass::Config,
            Error::Parameter(_) | Error::Domain(_) => ErrorClass::Parameter,
            Error::NonPositiveHeight { .. } | Error::Mesh(_) => ErrorClass::Geometry,
            Error::DegenerateSpectrum { .. }
            | Error::BranchCrossing { .. }
            | Error::NoConvergence { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NonContraction { .. }
            | Error::SmallOverlap { .. } => ErrorClass::Numerical,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
