use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },

    #[error("line {line}: negative rainfall {value} in column `{column}`")]
    NegativeRainfall {
        line: usize,
        column: String,
        value: f64,
    },

    #[error("line {line}: expected {expected} members, found {found}")]
    MemberCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),

    #[error("auxiliary predictor `{0}` absent from record")]
    MissingAux(String),

    #[error("unbounded quantile: probability 1 has no finite quantile")]
    UnboundedQuantile,

    #[error("closed form unsupported: {0}")]
    Unsupported(String),

    #[error("PWM system infeasible: {0}")]
    PwmInfeasible(String),

    #[error("quadrature did not converge (estimate {estimate}, error {error})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("missing time index {offset} for case at {time}")]
    MissingTimeIndex { time: String, offset: i64 },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite objective at start: {0}")]
    NonFiniteObjective(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user input (bad files, bad config) rather than by a
    /// failure inside the library. The CLI maps these to exit code 1.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::NegativeRainfall { .. }
                | Error::MemberCount { .. }
                | Error::Schema(_)
                | Error::UnknownPredictor(_)
                | Error::MissingAux(_)
                | Error::UnknownMethod(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
