use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report. Each variant maps onto a distinct
/// process exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated input: {0}")]
    Truncation(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },
    #[error("music pool of {pool} tracks cannot cover {artworks} artworks")]
    InsufficientPool { artworks: usize, pool: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("record {0:?} has no style label")]
    MissingStyle(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("brute-force oracle limited to {max}x{max}, got {rows}x{cols}")]
    OracleSize { rows: usize, cols: usize, max: usize },
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("signal of {len} samples is shorter than one window of {n_fft}")]
    TooShort { len: usize, n_fft: usize },
    #[error("invalid band or filterbank parameters: {0}")]
    Band(String),
    #[error("invalid STFT parameters: {0}")]
    Stft(String),
    #[error("invalid noise schedule: {0}")]
    Schedule(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("timestep {t} out of range 0..{len}")]
    Timestep { t: usize, len: usize },
    #[error("inference steps {steps} outside 1..={max}")]
    Steps { steps: usize, max: usize },
    #[error("non-finite gradient in {0}")]
    Grad(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("need at least {needed} samples, got {actual}")]
    Sample { needed: usize, actual: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Symmetry(f64),
    #[error("support violation at index {0}: q is zero where p is positive")]
    Support(usize),
    #[error("invalid probability vector: {0}")]
    Probability(String),
    #[error("id {id:?} not found in {store}")]
    Lookup { id: String, store: &'static str },
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

    /// Process exit code for this error class. `0` is success, `1` an
    /// unclassified failure and `2` a usage error, so codes start at 10.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 10,
            Error::Format(_) => 11,
            Error::Truncation(_) => 12,
            Error::DuplicateId(_) => 13,
            Error::Data(_) => 14,
            Error::ZeroNorm => 15,
            Error::Dim { .. } => 16,
            Error::InsufficientPool { .. } => 17,
            Error::EmptyInput(_) => 18,
            Error::MissingStyle(_) => 19,
            Error::Split(_) => 20,
            Error::OracleSize { .. } => 21,
            Error::UnsupportedCodec(_) => 22,
            Error::TooShort { .. } => 23,
            Error::Band(_) => 24,
            Error::Stft(_) => 25,
            Error::Schedule(_) => 26,
            Error::Shape(_) => 27,
            Error::Timestep { .. } => 28,
            Error::Steps { .. } => 29,
            Error::Grad(_) => 30,
            Error::Config(_) => 31,
            Error::Sample { .. } => 32,
            Error::Symmetry(_) => 33,
            Error::Support(_) => 34,
            Error::Probability(_) => 35,
            Error::Lookup { .. } => 36,
            Error::Json(_) => 37,
        }
    }
}
