use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("no comparable points")]
    NoComparablePoints,

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("{name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("overloaded: part-load ratio {0} exceeds 1")]
    Overloaded(f64),

    #[error("thermodynamics violated: {0}")]
    Thermodynamics(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("diverged: non-finite training loss at epoch {epoch}; try a lower learning rate")]
    Diverged { epoch: usize },

    #[error("data leakage: {0}")]
    DataLeakage(String),

    #[error("baseline/reporting overlap: {0}")]
    Overlap(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
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
    pub(crate) fn in_phase(phase: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Phase {
            phase,
            source: Box::new(source),
        }
    }
}
