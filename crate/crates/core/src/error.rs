use thiserror::Error;

/// Errors produced by grid construction, solvers and the CLI pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("layer under-resolved: {rows} rows across the layer depth, need at least {required}")]
    Resolution { rows: usize, required: usize },
    #[error("degenerate layer: {0}")]
    DegenerateLayer(String),
    #[error("field does not conform to grid: {0}")]
    Conformance(String),
    #[error("ill-posed problem: {0}")]
    WellPosedness(String),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("rate fit failed: {0}")]
    Fit(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
