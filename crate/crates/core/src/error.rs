use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid configuration (durations, counts, model shapes).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A numerical routine failed (factorization, degenerate statistics).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("power flow did not converge after {iterations} iterations (max |dV| trace: {trace:?})")]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Numerical(_) => "numerical",
            Error::NoConvergence { .. } => "convergence",
            Error::Csv { .. } => "csv",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv {
            line,
            message: e.to_string(),
        }
    }
}

/// Attaches human-readable context (transformer id, interval index) to errors.
pub trait Context<T> {
    fn context<C: Into<String>>(self, context: C) -> Result<T>;
    fn with_context<C: Into<String>, F: FnOnce() -> C>(self, f: F) -> Result<T>;
}

impl<T, E: Into<Error>> Context<T> for std::result::Result<T, E> {
    fn context<C: Into<String>>(self, context: C) -> Result<T> {
        self.map_err(|e| Error::Context {
            context: context.into(),
            source: Box::new(e.into()),
        })
    }

    fn with_context<C: Into<String>, F: FnOnce() -> C>(self, f: F) -> Result<T> {
        self.map_err(|e| Error::Context {
            context: f().into(),
            source: Box::new(e.into()),
        })
    }
}
