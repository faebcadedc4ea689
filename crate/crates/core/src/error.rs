use thiserror::Error;

use crate::device::Lifecycle;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no domain to advance")]
    NoDomain,

    #[error("track occupied: a domain is already present")]
    TrackOccupied,

    #[error("write pulse of {v_write} V did not nucleate a domain (threshold {threshold} V)")]
    NucleationFailed { v_write: f64, threshold: f64 },

    #[error("inconsistent readout: R_A = {r_a} ohm, R_B = {r_b} ohm")]
    InconsistentReadout { r_a: f64, r_b: f64 },

    #[error("readout after write classified as {0:?}, expected Write")]
    WriteNotObserved(Lifecycle),

    #[error("cycle {index}: {source}")]
    Cycle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("traces do not share a pulse schedule (trace {index} differs)")]
    ScheduleMismatch { index: usize },

    #[error("kappa calibration failed: {0}")]
    Calibration(String),

    #[error("target histogram is empty")]
    EmptyTarget,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("intensity {value} at pixel {index} is outside [0, 1]")]
    Intensity { index: usize, value: f64 },

    #[error("training diverged at batch {batch}: non-finite {what}; try a smaller learning rate (current {learning_rate})")]
    Diverged {
        what: &'static str,
        batch: usize,
        learning_rate: f64,
    },

    #[error("not an IDX image file (magic {0:#010x})")]
    NotIdxImages(u32),

    #[error("not an IDX label file (magic {0:#010x})")]
    NotIdxLabels(u32),

    #[error("truncated at byte {0}")]
    Truncated(usize),

    #[error("label out of range at index {index}: {label}")]
    LabelOutOfRange { index: usize, label: u8 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
