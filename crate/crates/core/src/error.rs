use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value:e} leaves the normalized range of {format}")]
    OverflowOrUnderflow { value: f64, format: String },

    #[error("non-finite input {0}")]
    NonFinite(f64),

    #[error("division by zero")]
    DivisionByZero,

    #[error("exact value is zero but computed value is {computed:e}")]
    ZeroReference { computed: f64 },

    #[error("deterministic bound is invalid: n*u = {nu} >= 1")]
    BoundInvalid { nu: f64 },

    #[error("member confidence {zeta} is not below 1")]
    InfeasibleConfidence { zeta: f64 },

    #[error("no stable crossing found below n = {cap}")]
    ScanCapExceeded { cap: u64 },

    #[error("empty input")]
    EmptyInput,

    #[error("empty sample")]
    EmptySample,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero pivot at index {index}")]
    ZeroPivot { index: usize },

    #[error("reference solve failed")]
    SingularReference,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
