use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("{value} lies outside the domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("grid mismatch between functions")]
    GridMismatch,

    #[error("band not ordered at t = {t}: lower {lower} > upper {upper}")]
    NotOrdered { t: f64, lower: f64, upper: f64 },

    #[error("range [{lo}, {hi}] is not contained in the window [{window_lo}, {window_hi}]")]
    WindowViolation { lo: f64, hi: f64, window_lo: f64, window_hi: f64 },

    #[error("advance map invalid at t = {t}: tau(t) = {value}")]
    AdvanceOutOfRange { t: f64, value: f64 },

    #[error("iterate left the band at t = {t} by {excess:e}")]
    BandEscape { t: f64, excess: f64 },

    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NonConvergence { iterations: usize, change: f64 },

    #[error("right-hand side is not monotone after the linear shift at t = {t}: {detail}")]
    NotMonotone { t: f64, detail: String },

    #[error("monotone iteration broke at iteration {iteration}, t = {t}: {detail}")]
    MonotoneBreak { iteration: usize, t: f64, detail: String },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("H4 inequality violated: {0}")]
    H4Violation(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
