use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A propagated entry left the overflow guard (or became NaN/Inf).
    #[error("state became non-finite or exceeded {guard:e} at t = {t}")]
    NonFiniteState { t: f64, guard: f64 },

    #[error("interval [{t0}, {t1}] is outside the pulse interval [{start}, {end}]")]
    IntervalOutsidePulse {
        t0: f64,
        t1: f64,
        start: f64,
        end: f64,
    },

    #[error("magnetic field is zero (|beta| = {beta:e}); the fuzzy centre is undefined")]
    ZeroField { beta: f64 },

    #[error("theta vanishes at t = {t} with slope {slope}; a regular zero needs slope +/-2")]
    SingularTheta { t: f64, slope: f64 },

    #[error("constraint system is singular")]
    SingularSystem,

    #[error("squeezing magnitude b must be non-zero")]
    ZeroB,

    #[error("no candidates found: {0}")]
    EmptyResult(String),

    #[error("trace {sigma} is not on the threshold band (eps = {eps:e})")]
    NotOnThreshold { sigma: f64, eps: f64 },

    #[error("profile is not smooth enough for {requested} correction terms (limit {limit})")]
    InsufficientSmoothness { requested: usize, limit: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
