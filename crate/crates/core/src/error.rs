use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid setup, configuration or hyperparameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition (input out of range, length
    /// mismatch, empty batch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The class prior is too close to 1/2 for the pairwise estimators.
    #[error("numeric guard: class prior pi_plus = {pi_plus} is within {margin} of 0.5")]
    PriorTooBalanced { pi_plus: f64, margin: f64 },

    /// Division guard in a one-sided estimator.
    #[error("division guard: confidence {s} of pair {index} makes the {estimator} weight undefined")]
    DivisionGuard { estimator: &'static str, index: usize, s: f64 },

    /// Operations called in the wrong order (backward before forward, step
    /// without gradients).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data that is well-formed but unusable (a label outside a
    /// corruption rule, too few examples for a split).
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("{path}: parse error at byte offset {offset}: {msg}")]
    Parse { path: PathBuf, offset: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
