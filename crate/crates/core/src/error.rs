use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cylinder: {0}")]
    DegenerateCylinder(String),

    #[error("invalid site index {index} (valid range 0..{len})")]
    InvalidSite { index: usize, len: usize },

    #[error("site {0} is outside the domain of this operator")]
    OutsideDomain(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Occupation profiles must lie in [0,1]: a density outside that range
    /// cannot be produced by an exclusion process.
    #[error("profile value {value} at {location} is outside [0,1]; exclusion forbids densities outside [0,1]")]
    ProfileOutOfRange { value: f64, location: String },

    #[error("configuration does not match geometry: {0}")]
    GeometryMismatch(String),

    #[error("trajectory too long ({cap} events); raise cap or shrink T/N")]
    TrajectoryTooLong { cap: usize },

    #[error("requested time {requested} exceeds trajectory horizon {horizon}")]
    BeyondHorizon { requested: f64, horizon: f64 },

    #[error("state space of 2^{bits} states exceeds cap 2^{cap_bits}")]
    StateCapExceeded { bits: usize, cap_bits: usize },

    #[error("measure has a zero entry at state {0}")]
    ZeroReference(usize),

    #[error("negative density entry {value} at state {state}")]
    NegativeDensity { state: usize, value: f64 },

    #[error("matrix exponential did not converge: {0}")]
    NonConvergence(String),

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
