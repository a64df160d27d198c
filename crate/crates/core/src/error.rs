use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid velocity set: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("bisection did not converge in [{lo}, {hi}] after {iterations} iterations")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },

    #[error("no sign change in [{lo}, {hi}]: {what}")]
    NoSignChange { lo: f64, hi: f64, what: String },

    #[error("mode matrix is numerically singular (condition {condition:.3e}) for rates {rates:?}")]
    SingularModes { condition: f64, rates: Vec<f64> },

    #[error(
        "non-resonance violated: v_min = {v_min} <= dx * (chi_M + chi_N) = {bound}; refine the velocity grid or coarsen dx"
    )]
    Resonance { v_min: f64, bound: f64 },

    #[error("time step {dt:.6e} exceeds the stability bound {bound:.6e} ({what})")]
    TimeStep { dt: f64, bound: f64, what: String },

    #[error("negative density input at index {index}: {value}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("speed c = {c} outside the admissible range ({lo}, {hi})")]
    InadmissibleSpeed { c: f64, lo: f64, hi: f64 },

    #[error("stationary profile has negative density {value:.3e} at z = {z}")]
    NegativeProfile { value: f64, z: f64 },

    #[error("domain too small: profile tail {tail:.3e} exceeds {limit:.3e} at the edge")]
    DomainTooSmall { tail: f64, limit: f64 },

    #[error("all-zero density")]
    ZeroDensity,

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration: {0}")]
    Config(String),
}
