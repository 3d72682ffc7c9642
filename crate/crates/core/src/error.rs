use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The nearest-uniaxial projection is only guaranteed when `S > 8|R|`.
    #[error("degenerate projection: S = {s}, R = {r} violates S > 8|R|")]
    DegenerateProjection { s: f64, r: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    /// Short machine-readable category, used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DegenerateProjection { .. } => "degenerate-projection",
            Error::Domain(_) => "domain",
            Error::GridMismatch(_) => "grid-mismatch",
            Error::Config(_) => "config",
            Error::Solver(_) => "solver",
        }
    }
}
