use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only N = 1 and N = 2 are implemented")]
    UnsupportedDimension(usize),
    #[error("profile {profile} is not available in dimension {dim}")]
    UnsupportedProfile { profile: &'static str, dim: usize },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error(
        "kernel under-resolved: support radius {radius} with spacing {h} gives {points:.3} points \
         per radius, need at least 4 (use h <= {required_h})"
    )]
    UnderResolved {
        radius: f64,
        h: f64,
        points: f64,
        required_h: f64,
    },
    #[error(
        "periodic grid of {size} points along axis {axis} cannot hold a stencil of width {width}"
    )]
    GridTooSmall {
        axis: usize,
        size: usize,
        width: usize,
    },
    #[error("box side {length} is not a whole multiple of spacing {h}")]
    IncommensurateBox { length: f64, h: f64 },
    #[error("field has {got} values, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {node}")]
    NonFiniteInput { node: usize },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("solution became non-finite after t = {last_valid_time}")]
    Blowup { last_valid_time: f64 },
    #[error("Picard iteration stopped contracting at sweep {sweep} (factor {factor})")]
    NonContraction { sweep: usize, factor: f64 },
    #[error(
        "Picard iteration did not reach tolerance {tolerance} in {sweeps} sweeps (last {last})"
    )]
    PicardNotConverged {
        tolerance: f64,
        sweeps: usize,
        last: f64,
    },
    #[error("power-law fit needs at least 5 samples in the window, found {0}")]
    TooFewSamples(usize),
    #[error("value {value} at t = {time} is not positive; cannot take its logarithm")]
    NonPositiveSample { time: f64, value: f64 },
    #[error("eigenvalue iteration stagnated after {iterations} iterations (residual {residual})")]
    Stagnation { iterations: usize, residual: f64 },
    #[error("operator is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("zero field has no GNS ratio")]
    ZeroField,
    #[error("mismatched problems: {0}")]
    Mismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
