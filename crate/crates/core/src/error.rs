use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Variants are kept distinct so callers (and the CLI exit-code mapping) can
/// tell a bad input apart from a numerical failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point {m} is not on the grid E_{n}")]
    OffGrid { m: f64, n: usize },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("degenerate state space: {0}")]
    DegenerateSpace(String),

    #[error("generator is not irreducible: {0}")]
    Irreducible(String),

    #[error(
        "no convergence after {iterations} iterations \
         (right residual {resid_right:e}, left residual {resid_left:e})"
    )]
    Convergence {
        iterations: usize,
        resid_right: f64,
        resid_left: f64,
    },

    #[error("survival mass {survival:e} below representable floor at t = {t}")]
    Starvation { survival: f64, t: f64 },

    #[error("no surviving replicas at t = {t} out of {replicas}")]
    NoSurvivors { t: f64, replicas: usize },

    #[error("Richardson check failed: max deviation {deviation:e} exceeds {bound:e}")]
    StepSize { deviation: f64, bound: f64 },

    #[error("coupling construction failed: {0}")]
    Coupling(String),

    #[error("property violated: {0}")]
    Property(String),
}

pub type Result<T> = std::result::Result<T, Error>;
