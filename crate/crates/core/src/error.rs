use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while decoding IDX files or slicing datasets.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("image dimensions {rows}x{cols} are not 28x28")]
    DimensionMismatch { rows: u32, cols: u32 },
    #[error("label byte {value} at index {index} is not a digit")]
    BadLabel { index: usize, value: u8 },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("subset [{offset}, {offset}+{count}) exceeds dataset of {len}")]
    OutOfRange { offset: usize, count: usize, len: usize },
}

#[derive(Debug, Error)]
pub enum SnnError {
    #[error(transparent)]
    Data(#[from] DataError),

    #[error("non-finite state in {what} of neuron {neuron} at t = {time_ms} ms")]
    NonFiniteState {
        what: &'static str,
        neuron: usize,
        time_ms: f64,
    },

    #[error("stimulus {stimulus}: {source}")]
    AtStimulus {
        stimulus: usize,
        #[source]
        source: Box<SnnError>,
    },

    #[error("invalid network spec: {0}")]
    BadSpec(String),

    #[error("incompatible trained states: {0}")]
    IncompatibleStates(String),

    #[error("bad hyperparameter range for {name}: [{lo}, {hi}]")]
    BadRange { name: &'static str, lo: f64, hi: f64 },

    #[error("insufficient data: {workers} workers x {per_worker} stimuli exceed {available}")]
    InsufficientData {
        workers: usize,
        per_worker: usize,
        available: usize,
    },

    #[error("diversity pool has {pool} entries, need at least {workers}")]
    PoolTooSmall { pool: usize, workers: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a state file (bad magic)")]
    BadMagic,

    #[error("state file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("state file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("state file truncated")]
    Truncated,

    #[error("malformed state header: {0}")]
    Header(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl SnnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SnnError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stimulus(self, stimulus: usize) -> Self {
        SnnError::AtStimulus {
            stimulus,
            source: Box::new(self),
        }
    }

    /// True when the error (possibly wrapped) stems from a numerical blow-up.
    pub fn is_numeric(&self) -> bool {
        match self {
            SnnError::NonFiniteState { .. } => true,
            SnnError::AtStimulus { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = SnnError> = std::result::Result<T, E>;
