use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate cell for location `{location}` at time {time}")]
    DuplicateCell { location: String, time: i64 },

    #[error("covariate vector for location `{location}` at time {time} has length {found}, expected {expected}")]
    CovariateLength {
        location: String,
        time: i64,
        expected: usize,
        found: usize,
    },

    #[error("location `{0}` has non-finite coordinates")]
    NonFiniteCoords(String),

    #[error("location `{0}` is defined more than once")]
    DuplicateLocation(String),

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("dataset needs at least {required} locations, found {found}")]
    TooFewLocations { required: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("K = {k} exceeds the number of available units ({units})")]
    TooManyFolds { k: usize, units: usize },

    #[error("buffered fold for location `{location}` has an empty training set")]
    EmptyTrainingFold { location: String },

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("matrix is not positive definite after jitter {jitter:e}{hint}")]
    NotPositiveDefinite { jitter: f64, hint: &'static str },

    #[error("likelihood non-finite at every probe: {}", .probes.join("; "))]
    Optimizer { probes: Vec<String> },

    #[error("fold {fold}: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("holdout shares locations with the training data: {}", .0.join(", "))]
    LocationOverlap(Vec<String>),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("size guard: {cells} cells exceeds the cap of {cap}")]
    TooLarge { cells: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
