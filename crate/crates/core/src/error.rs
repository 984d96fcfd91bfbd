use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported wav layout in {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },

    #[error("unsupported sample rate {0} Hz (expected 16000 Hz)")]
    UnsupportedSampleRate(u32),

    #[error("empty waveform")]
    EmptyWaveform,

    #[error("empty input")]
    EmptyInput,

    #[error("frame length {frame_len} exceeds signal length {len}")]
    FrameTooLong { frame_len: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("signal is all zero")]
    ZeroSignal,

    #[error("zero-energy signal cannot be scaled to a target ratio")]
    ZeroEnergy,

    #[error("not enough training data: {got} vectors, need at least {need}")]
    NotEnoughData { got: usize, need: usize },

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },

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

    pub(crate) fn parse(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
