use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid spacing does not tile {what}")]
    NonTilingGrid { what: &'static str },
    #[error("thin-layer thickness {eta} exceeds the thinner slab ({limit})")]
    EtaTooLarge { eta: f64, limit: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mirror requested outside the matched layers (nz_minus={nz_minus}, nz_plus={nz_plus})")]
    AsymmetricSlabs { nz_minus: usize, nz_plus: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: [usize; 3], found: [usize; 3] },
    #[error("thin-layer mode is not active on this geometry")]
    ThinLayerInactive,
    #[error("exchange constant is zero; the nonlinear Neumann condition is ill-posed")]
    ZeroExchange,
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("Poisson solver did not reach tolerance after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("field has net flux {flux:e} through the box walls; no divergence-free correction exists")]
    IncompatibleFlux { flux: f64 },
    #[error("time step {dt:e} violates the Yee CFL limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("time step {dt:e} exceeds the explicit stability bound {limit:e}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },
    #[error("averaging window [{start}, {end}] is not covered by the trajectory")]
    WindowOutOfRange { start: f64, end: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. }
            | Error::CflViolation { .. }
            | Error::StabilityViolation { .. }
            | Error::SolverDiverged { .. } => 3,
            Error::Io(_) | Error::Snapshot { .. } | Error::Locked(_) => 4,
            _ => 2,
        }
    }

    /// Short machine-parsable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonTilingGrid { .. } => "NonTilingGrid",
            Error::EtaTooLarge { .. } => "EtaTooLarge",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::AsymmetricSlabs { .. } => "AsymmetricSlabs",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::ThinLayerInactive => "ThinLayerInactive",
            Error::ZeroExchange => "ZeroExchange",
            Error::InvalidParams(_) => "InvalidParams",
            Error::SolverDiverged { .. } => "SolverDiverged",
            Error::IncompatibleFlux { .. } => "IncompatibleFlux",
            Error::CflViolation { .. } => "CFLViolation",
            Error::StabilityViolation { .. } => "StabilityViolation",
            Error::NonFinite { .. } => "NonFinite",
            Error::WindowOutOfRange { .. } => "WindowOutOfRange",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::Snapshot { .. } => "SnapshotError",
            Error::Locked(_) => "Locked",
            Error::Io(_) => "IoError",
        }
    }
}
