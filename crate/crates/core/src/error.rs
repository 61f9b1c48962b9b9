use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("size mismatch in {what}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("label {label} at row {row} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        num_classes: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("invalid metadata: {0}")]
    Meta(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has {available} points, {requested} requested")]
    ClassTooSmall {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("too few converged samples: {converged} of {total}")]
    NotConverged { converged: usize, total: usize },

    #[error("no projection dimension up to {n_max} reached separability probability 0.5")]
    NoCrossing { n_max: usize },

    #[error("manifolds are not linearly separable in the full space")]
    NotSeparable,

    #[error("probe diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing marker {0}")]
    MissingMarker(String),

    #[error("marker {0} has no standard error")]
    MissingStderr(String),

    #[error("constant input series")]
    ConstantSeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::Truncated { .. } => "truncated",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::EmptyClass(_) => "empty_class",
            Error::Meta(_) => "invalid_meta",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::Numerical(_) => "numerical",
            Error::NotConverged { .. } => "not_converged",
            Error::NoCrossing { .. } => "no_crossing",
            Error::NotSeparable => "not_separable",
            Error::Diverged { .. } => "diverged",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::MissingMarker(_) => "missing_marker",
            Error::MissingStderr(_) => "missing_stderr",
            Error::ConstantSeries => "constant_series",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
