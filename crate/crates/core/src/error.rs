use thiserror::Error;

/// Errors raised by the special-function kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("argument {x} outside the domain of {what}")]
    Domain { what: &'static str, x: f64 },
    #[error("{what}: parameters (order {order}, z {z}) exceed the supported range")]
    OutOfRange { what: &'static str, order: f64, z: f64 },
    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },
}

/// Errors raised by the three-parameter Gamma kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum G3pError {
    #[error("invalid G3p parameters: gamma={gamma}, alpha={alpha}, beta={beta}")]
    InvalidParams { gamma: u32, alpha: f64, beta: f64 },
    #[error("x = {0} outside the support")]
    Domain(f64),
    #[error("hat construction failed: {0}")]
    Hat(String),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Errors raised by the table cache reader.
#[derive(Debug, Error)]
pub enum TableIoError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported table version {0}")]
    Version(u32),
    #[error("truncated table file")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised while running a chain.
#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("inconsistent data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("matrix not positive definite at iteration {iteration}, group {group}, column {column}: {what}")]
    NotPositiveDefinite {
        iteration: usize,
        group: usize,
        column: usize,
        what: &'static str,
    },
    #[error("correlation update failed at iteration {iteration}: {what}")]
    Correlation { iteration: usize, what: String },
    #[error(transparent)]
    G3p(#[from] G3pError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors raised by the scoring kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("AUC undefined: truth contains only one class")]
    SingleClass,
    #[error("singular predictor block")]
    Singular,
}

/// Errors raised by the scenario generators.
#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("could not generate a positive definite block after {0} attempts")]
    Exhausted(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Errors raised while reading numeric CSV matrices.
#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    Ragged {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: row {row}, column {column}: cannot parse '{value}' as a number")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        value: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
