use std::fmt;

use serde::Serialize;

/// One of the standing assumptions on a pair potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// `phi >= 0` and `phi <= sup_norm`.
    Bounded,
    Symmetric,
    /// `phi(x, y) = 0` whenever `|x - y| > R`.
    FiniteRange,
    /// `phi(x, y) >= A_delta > 0` whenever `|x - y| <= delta`.
    Repulsion,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Assumption::Bounded => "boundedness (0 <= phi <= sup_norm)",
            Assumption::Symmetric => "symmetry",
            Assumption::FiniteRange => "finite range (FR)",
            Assumption::Repulsion => "repulsion condition (RC)",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite coordinate in point {0:?}")]
    NonFinite(Vec<f64>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("region is not contained in the configuration window ({missing} cube(s) outside)")]
    NotInWindow { missing: usize },

    #[error("two atoms share the position {0:?}")]
    DuplicatePosition(Vec<f64>),

    #[error("atom at {position:?} has a zero mark")]
    ZeroMark { position: Vec<f64> },

    #[error("atom at {position:?} lies outside the configuration window")]
    AtomOutsideWindow { position: Vec<f64> },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("divergent Laplace exponent: {0}")]
    DivergentLaplaceExponent(String),

    #[error("quadrature did not reach tolerance (estimate {value}, error {error})")]
    Quadrature { value: f64, error: f64 },

    #[error("low acceptance: {trials} trials exhausted, running partition-function estimate {z_estimate:e}")]
    LowAcceptance { trials: u64, z_estimate: f64 },

    #[error("rejection sampling needs H >= 0 but a proposal has H = {energy}; use positive marks or the MCMC sampler")]
    NegativeEnergy { energy: f64 },

    #[error("pair potential violates {assumption}: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
    },

    #[error("bound precondition violated: {0}")]
    BoundPrecondition(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
