//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar or integer parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Geometric preconditions violated (empty sets, touching boundaries,
    /// rays through singular sets, points outside domains).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Every sampled ball mass vanished; a growth fit is meaningless.
    #[error("no mass found around the requested center")]
    NoMassAtCenter,

    /// The integral diverges (e.g. an atom sits at the evaluation point).
    #[error("divergent integral: {0}")]
    Divergent(String),

    /// Quadrature could not certify the requested tolerance; the partial
    /// bracket is carried for diagnostics.
    #[error("tolerance unmet at max refinement: bracket [{lower}, {upper}], requested {tol}")]
    ToleranceUnmet { lower: f64, upper: f64, tol: f64 },

    /// A stated hypothesis failed on the data (e.g. measured growth exponent
    /// below the assumed one).
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    /// Evaluation at or too near a singular set.
    #[error("singularity: {0}")]
    Singularity(String),

    /// Vanishing gradient where p < 2 makes the operator degenerate.
    #[error("degenerate point: vanishing gradient with p = {p}")]
    DegeneratePoint { p: f64 },

    /// The descent solver did not converge within its iteration budget.
    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    /// Malformed configuration or descriptor input.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
