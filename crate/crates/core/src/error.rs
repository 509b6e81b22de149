use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Every variant maps to a stable machine-readable code (see [`Error::code`])
/// which the HTTP service forwards to clients.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("file is empty: {0}")]
    EmptyFile(String),

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount { row: usize, expected: usize, found: usize },

    #[error("row {row}, column `{column}`: cannot parse {value:?} as {expected}")]
    TypeMismatch {
        row: usize,
        column: String,
        value: String,
        expected: String,
    },

    #[error("row {row}: treatment must be 0 or 1, found {value:?}")]
    InvalidTreatment { row: usize, value: String },

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("treatment arm T={0} has no rows")]
    EmptyArm(u8),

    #[error("group {0} of the audited feature has no rows")]
    EmptyGroup(u8),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("labels contain a single class; AUC is undefined")]
    SingleClass,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("reference set has zero variance")]
    ZeroVariance,

    #[error("unknown shape {0}")]
    UnknownShape(String),

    #[error("distilled and audit models do not share knots for shape {0}")]
    KnotMismatch(String),

    #[error("invalid feature pair ({0}, {1})")]
    InvalidPair(usize, usize),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("schema fingerprint mismatch")]
    SchemaMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSchema(_) => "invalid_schema",
            Error::EmptyFile(_) => "empty_file",
            Error::MissingColumn { .. } => "missing_column",
            Error::ColumnCount { .. } => "column_count",
            Error::TypeMismatch { .. } => "type_mismatch",
            Error::InvalidTreatment { .. } => "invalid_treatment",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyArm(_) => "empty_arm",
            Error::EmptyGroup(_) => "empty_group",
            Error::EmptyDataset => "empty_dataset",
            Error::SingleClass => "single_class",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::ZeroVariance => "zero_variance",
            Error::UnknownShape(_) => "unknown_shape",
            Error::KnotMismatch(_) => "knot_mismatch",
            Error::InvalidPair(..) => "invalid_pair",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::SchemaMismatch => "schema_mismatch",
            Error::Io(_) => "io",
            Error::Json(_) => "malformed_json",
            Error::Csv(_) => "malformed_csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
