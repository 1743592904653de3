use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: axis {axis} has {cells} cells, at least 8 are required")]
    TooCoarse { axis: usize, cells: usize },

    #[error("invalid box on axis {axis}: lower {lower} must be strictly below upper {upper}")]
    InvalidBox { axis: usize, lower: f64, upper: f64 },

    #[error("unsupported dimension {0}; only d = 1 and d = 2 are implemented")]
    UnsupportedDim(usize),

    #[error("non-finite value at node {node} in {what}")]
    NonFiniteInput { what: &'static str, node: usize },

    #[error("u + delta must be positive; minimum over nodes is {min} at node {node}")]
    NonPositiveShiftedField { min: f64, node: usize },

    #[error("invalid exponent p = {0}; expected p >= 1 or p = inf")]
    InvalidExponent(f64),

    #[error("field length {got} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("positivity lost at t = {time}: min u = {min}")]
    PositivityLoss { time: f64, min: f64 },

    #[error("sampled drift magnitude {bound} exceeds 1e6; the Hopf-Cole shift is probably too small")]
    DriftUnbounded { bound: f64 },

    #[error("L^p contraction is only asserted for drift-free runs (drift bound {0})")]
    DriftNotZero(f64),

    #[error("radius {radius} is too large: the box does not contain the ball about the origin")]
    RadiusTooLarge { radius: f64 },

    #[error("no stored field at checkpoint t = {0}")]
    CheckpointMissing(f64),

    #[error("stored u = {value} at t = {time} exceeds the declared sup bound A = {bound}")]
    SupBoundViolated { value: f64, time: f64, bound: f64 },

    #[error("adjoint run does not match the trajectory: {0}")]
    DriftMismatch(String),

    #[error("terminal adjoint datum has mass {0}, expected 1")]
    MassNotUnit(f64),

    #[error("constant {name} could not be certified: {reason}")]
    ConstantNotCertified { name: String, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error in field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("scenario `{id}`: {source}")]
    Scenario {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
