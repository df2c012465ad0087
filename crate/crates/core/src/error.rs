use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid header in {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("payload length mismatch: expected {expected} values, found {found}")]
    PayloadLength { expected: usize, found: usize },

    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("empty volume")]
    EmptyVolume,

    #[error("odd dimension {len} on axis {axis}")]
    OddDimension { axis: &'static str, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("timestep {t} outside 1..={max}")]
    Timestep { t: usize, max: usize },

    #[error("non-finite values encountered while sampling at timestep {t}")]
    SamplingDiverged { t: usize },

    #[error("non-finite loss {loss} at optimizer step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("symmetric eigendecomposition failed")]
    Eigen,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) const AXIS_NAMES: [&str; 3] = ["D", "H", "W"];
