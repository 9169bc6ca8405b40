use thiserror::Error;

/// Errors produced by the estimation, bound and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("objective is not convex: subgradient decreases between θ={lo} and θ={hi}")]
    NonConvex { lo: f64, hi: f64 },

    #[error("no bracketed root in [{lo}, {hi}]: estimating function has the same sign at both ends")]
    NoBracketedRoot { lo: f64, hi: f64 },

    #[error("bisection did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("design is collinear: {} near-null direction(s), smallest singular value {smallest_sv:e}", directions.len())]
    Collinear {
        smallest_sv: f64,
        directions: Vec<Vec<f64>>,
    },

    #[error("numerical identity violated: {what} off by {residual:e} (tolerance {tolerance:e})")]
    Identity {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("identifiability violated: expected log-likelihood ratio {0} is not strictly negative")]
    Identifiability(f64),

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error record and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty_input",
            Error::NonConvex { .. } => "non_convex",
            Error::NoBracketedRoot { .. } => "no_bracketed_root",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Collinear { .. } => "collinear",
            Error::Identity { .. } => "identity_violation",
            Error::Identifiability(_) => "identifiability",
            Error::Degenerate(_) => "degenerate",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")))
    }
}
