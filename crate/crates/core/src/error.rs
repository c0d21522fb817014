use thiserror::Error;

/// Errors raised across ingestion, estimation and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("duplicate row {row}: entity '{entity}' period {period} already seen")]
    DuplicateRow {
        row: usize,
        entity: String,
        period: i64,
    },

    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    ParseValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("no estimable observations")]
    NoEstimableObservations,

    #[error("unknown grade '{grade}'; valid labels: {valid}")]
    UnknownGrade { grade: String, valid: String },

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid model specification: {0}")]
    Specification(String),

    #[error("rank deficient regressors; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("unidentified slope: {}", .columns.join(", "))]
    Unidentified { columns: Vec<String> },

    #[error("empty instrument block for {0}")]
    EmptyInstrumentBlock(String),

    #[error("under-identified: {instruments} instruments for {regressors} regressors")]
    UnderIdentified { instruments: usize, regressors: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("GMM iteration did not converge after {iterations} steps; coefficient change trace: {trace:?}")]
    NotConverged { iterations: usize, trace: Vec<f64> },

    #[error("too few periods for AR({0})")]
    TooFewPeriods(usize),

    #[error("impossible state: {0}")]
    ImpossibleState(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
