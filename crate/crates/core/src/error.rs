use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no trajectory points left after filtering")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("axis {axis} has zero extent")]
    DegenerateAxis { axis: char },

    #[error("coordinate ({x}, {y}) lies outside the unit square")]
    OutOfRange { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies outside the bounding box")]
    OutsideBbox { x: f64, y: f64 },

    #[error("shape mismatch: expected {expected} cells, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("cell {cell} is fixed to {expected} but the assignment has {actual}")]
    FixedViolation { cell: usize, expected: bool, actual: bool },

    #[error("infeasible model: {0}")]
    Infeasible(String),

    #[error("{free} free variables exceed the exact enumeration bound of {limit}")]
    TooManyVariables { free: usize, limit: usize },

    #[error("optimizer produced no finite candidate")]
    NoFiniteCandidate,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error JSON and HTTP bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyInput => "empty_input",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateAxis { .. } => "degenerate_axis",
            Error::OutOfRange { .. } => "out_of_range",
            Error::OutsideBbox { .. } => "outside_bbox",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::FixedViolation { .. } => "fixed_violation",
            Error::Infeasible(_) => "infeasible",
            Error::TooManyVariables { .. } => "too_many_variables",
            Error::NoFiniteCandidate => "no_finite_candidate",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
