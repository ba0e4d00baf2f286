use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot L2-normalize zero vector '{0}'")]
    ZeroNorm(&'static str),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("shared bank '{0}' is already registered")]
    DuplicateBank(String),

    #[error("unknown shared bank '{0}'")]
    UnknownBank(String),

    #[error("unknown object '{0}'")]
    UnknownObject(String),

    #[error("expression parse error at column {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("{path}: IDX format error at byte offset {offset}: {msg}")]
    Idx { path: PathBuf, offset: u64, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty group")]
    EmptyGroup,

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("missing series: {0}")]
    MissingSeries(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ZeroNorm(_) => "zero_norm",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::NonFinite(_) => "non_finite",
            Error::DuplicateBank(_) => "duplicate_bank",
            Error::UnknownBank(_) => "unknown_bank",
            Error::UnknownObject(_) => "unknown_object",
            Error::Parse { .. } => "parse",
            Error::Idx { .. } => "idx",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::EmptyGroup => "empty_group",
            Error::CheckFailed(_) => "check_failed",
            Error::MissingSeries(_) => "missing_series",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
