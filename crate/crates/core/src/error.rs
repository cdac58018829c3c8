use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A column named by the schema (or a required config key) is absent.
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing value in column `{column}` at data row {row}")]
    MissingValue { column: String, row: usize },

    #[error("binning error: {0}")]
    Binning(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("subsample error: {0}")]
    Subsample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("logistic regression needs both labels in the training response")]
    SingleClass,

    #[error("design matrix is singular; supply a positive l2 penalty")]
    Singular,

    #[error("dimension mismatch: model expects {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate null distribution: {0}")]
    DegenerateNull(String),

    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("enumeration needs {count} permutations, above cap {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("permutation {index} failed: {source}")]
    Iteration {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("permutation (outer {outer}, inner {inner}) failed: {source}")]
    NestedIteration {
        outer: usize,
        inner: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data set {index} failed: {source}")]
    Dataset {
        index: usize,
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
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than by a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Label(_)
                | Error::Format(_)
                | Error::MissingValue { .. }
                | Error::Binning(_)
                | Error::Config(_)
                | Error::InvalidParameter(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable kind, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Label(_) => "label",
            Error::Format(_) => "format",
            Error::MissingValue { .. } => "missing_value",
            Error::Binning(_) => "binning",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Split(_) => "split",
            Error::Subsample(_) => "subsample",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Config(_) => "config",
            Error::SingleClass => "single_class",
            Error::Singular => "singular",
            Error::Dimension { .. } => "dimension",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::DegenerateNull(_) => "degenerate_null",
            Error::Degenerate(_) => "degenerate",
            Error::Contract(_) => "contract",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Iteration { .. } => "iteration",
            Error::NestedIteration { .. } => "iteration",
            Error::Dataset { .. } => "dataset",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// The offending field or column, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Schema { field, .. } => Some(field),
            Error::MissingValue { column, .. } => Some(column),
            _ => None,
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}
