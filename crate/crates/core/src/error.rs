use thiserror::Error;

/// Coarse grouping of failures, used by the command line driver to pick an
/// exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Geometry,
    Solver,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("overlapping domain is not a strictly convex counterclockwise polygon: {0}")]
    NotConvex(String),

    #[error("overlapping domain must lie strictly inside the unit square")]
    DomainOutsideBackground,

    #[error("overlap-too-coarse: overlapping domain lies inside background cell {cell}")]
    OverlapTooCoarse { cell: usize },

    #[error("polygon is self-intersecting")]
    SelfIntersecting,

    #[error("geometry consistency check failed: {what} (deviation {deviation:e})")]
    GeometryConsistency { what: String, deviation: f64 },

    #[error("point ({0}, {1}) is not inside the mesh")]
    PointNotFound(f64, f64),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("factorization failed: no usable pivot at elimination step {pivot}")]
    Factorization { pivot: usize },

    #[error("solver accuracy: relative residual {residual:e} exceeds {tolerance:e}")]
    SolverAccuracy { residual: f64, tolerance: f64 },

    #[error("eigenvalue iteration stagnated after {iterations} steps (residual {residual:e})")]
    ProbeBreakdown { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter { .. } => ErrorCategory::Config,
            Error::NotConvex(_)
            | Error::DomainOutsideBackground
            | Error::OverlapTooCoarse { .. }
            | Error::SelfIntersecting
            | Error::GeometryConsistency { .. }
            | Error::PointNotFound(..) => ErrorCategory::Geometry,
            Error::Structure(_)
            | Error::Factorization { .. }
            | Error::SolverAccuracy { .. }
            | Error::ProbeBreakdown { .. } => ErrorCategory::Solver,
            Error::Io(_) => ErrorCategory::Io,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
