use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shooting bracket [{lo}, {hi}] does not straddle the ground state (both ends {outcome})")]
    BracketDoesNotStraddle { lo: f64, hi: f64, outcome: &'static str },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("quadrature identities disagree: mass {mass}, kinetic {kinetic}, quartic/2 {half_quartic}")]
    QuadratureInconsistency {
        mass: f64,
        kinetic: f64,
        half_quartic: f64,
    },

    #[error("potential is singular at ({0}, {1}) and no regularization radius is set")]
    SingularPoint(f64, f64),

    #[error("no negative well: every h_j is non-negative")]
    NoNegativeWell,

    #[error("field is not normalized: mass {0}")]
    NotNormalized(f64),

    #[error("field is identically zero")]
    ZeroField,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("rescale window exceeds source domain: {0}")]
    WindowOutOfDomain(String),

    #[error("interaction strength a = {a} is not below the critical value a* = {astar}")]
    Supercritical { a: f64, astar: f64 },

    #[error("power-law fit undefined: {0}")]
    FitUndefined(String),

    #[error("resolution limit: {0}")]
    Resolution(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
