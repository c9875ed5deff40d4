use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain parameters: {0}")]
    InvalidDomain(String),

    #[error("invalid damping profile: {0}")]
    InvalidDamping(String),

    #[error("point ({x}, {y}) is not on the boundary (distance {distance:e})")]
    NotOnBoundary { x: f64, y: f64, distance: f64 },

    #[error("domain kind `{0}` is not supported by the field solver")]
    UnsupportedDomain(&'static str),

    #[error("resolution {got} is below the minimum of {min} per direction")]
    ResolutionTooCoarse { got: usize, min: usize },

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("linear solver failure: {0}")]
    SolverFailure(String),

    #[error(
        "kernel threshold is ambiguous: singular value {sigma:e} lies in the ambiguity band \
         (relative {relative:e}); spectral gap around the cut is {gap:e}"
    )]
    ThresholdAmbiguous { sigma: f64, relative: f64, gap: f64 },

    #[error("decay fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("operator is numerically singular at mu = {mu} (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    SingularAtMu { mu: f64, sigma_min: f64, sigma_max: f64 },

    #[error("frequency grid is empty")]
    EmptyGrid,

    #[error("direction is not unit length (|xi| - 1 = {0:e})")]
    DegenerateDirection(f64),

    #[error("gliding along a flat side has infinite-order contact")]
    GlideOnFlatSide,

    #[error("contact is not gliding: {0}")]
    NotGliding(String),

    #[error("grid spacing {spacing} exceeds {limit} (fewer than 6 points per semiclassical wavelength)")]
    ResolutionGuard { spacing: f64, limit: f64 },

    #[error("phase-space density has zero total mass")]
    ZeroMass,

    #[error("invalid configuration at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
