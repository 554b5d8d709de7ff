use thiserror::Error;

/// Errors raised by targets, flows, event simulation and the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuzzError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "gradient mismatch at {point:?}, coordinate {coordinate}: analytic {analytic}, finite difference {numeric}"
    )]
    GradientMismatch {
        point: Vec<f64>,
        coordinate: usize,
        analytic: f64,
        numeric: f64,
    },

    /// The deterministic flow was queried at or beyond its explosion time, or a
    /// bounded state space was left. This is the graveyard state of the process.
    #[error("explosion domain reached: {0}")]
    ExplosionDomain(String),

    #[error("no-event escape: integrated rate stalled at {integrated} after time {time}")]
    NoEventEscape { integrated: f64, time: f64 },

    #[error("thinning bound violated on arc segment [{start}, {end}]: rate {rate} > bound {bound}")]
    ThinningBoundViolated {
        start: f64,
        end: f64,
        rate: f64,
        bound: f64,
    },

    #[error("event budget of {0} proposals exceeded")]
    EventBudgetExceeded(u64),

    #[error("coordinate overflow: |x_{coordinate}| = {value} exceeds guard")]
    CoordinateOverflow { coordinate: usize, value: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimate {value}, error {abs_err}")]
    QuadratureNonConvergence {
        a: f64,
        b: f64,
        value: f64,
        abs_err: f64,
    },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("root finding failed: {0}")]
    RootNotFound(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SuzzError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SuzzError>;
