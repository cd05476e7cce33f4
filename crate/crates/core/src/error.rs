use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("field length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("exponent q = {q} outside (2, {critical}]")]
    ExponentOutOfRange { q: f64, critical: f64 },

    /// The discrete quadratic form is not positive definite.
    #[error("operator is not coercive (smallest form eigenvalue {lambda:.6e}); the extension problem has no unique solution")]
    NotCoercive { lambda: f64 },

    #[error(
        "admissibility violated: requires ∫ f|h|^q dv_g < γ, but ∫ f|h|^q dv_g = {boundary_integral:.10e} \
         and γ = {gamma:.10e} (q = {q})"
    )]
    Inadmissible {
        gamma: f64,
        boundary_integral: f64,
        q: f64,
    },

    #[error("failed to bracket the constraint root: {0}")]
    Bracket(String),

    #[error("cannot scale the zero field onto the constraint set")]
    ZeroDirection,

    #[error("Lagrange multiplier vanishes (w = 0), contradicting ∫ f|h|^q dv_g < γ")]
    ZeroMultiplier,

    #[error("descent stagnated after {iterations} iterations (energy {energy:.10e}, stationarity residual {residual:.3e})")]
    Stagnation {
        iterations: usize,
        energy: f64,
        residual: f64,
    },

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("ε = {eps:.3e} under-resolved: {nodes_below} grid nodes below r = ε, need at least {required}")]
    Resolution {
        eps: f64,
        nodes_below: usize,
        required: usize,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unsupported dimension n = {n}: {detail}")]
    Dimension { n: usize, detail: String },
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }
}
