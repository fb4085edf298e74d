use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structured parse failures for DDPT blobs and JSON manifests.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("bad dtype {0:#04x}")]
    BadDtype(u8),
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch { expected: &'static str, found: &'static str },
    #[error("bad ndim {found}: expected {expected}")]
    BadNdim { expected: u8, found: u8 },
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("dimension overflow")]
    DimOverflow,
    #[error("invalid manifest field `{field}`: {reason}")]
    Manifest { field: String, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty tensor")]
    EmptyTensor,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no instances")]
    NoInstances,
    #[error("unassigned site ({h}, {w})")]
    UnassignedSite { h: u32, w: u32 },
    #[error("empty instance region {0}")]
    EmptyInstance(usize),
    #[error("degenerate dice")]
    DegenerateDice,
    #[error("no positive locations")]
    NoPositives,
    #[error("empty point list")]
    NoPoints,
    #[error("diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("infeasible packing: {0}")]
    Infeasible(String),
    #[error("missing flow blob for (t={t}, j={j})")]
    MissingFlow { t: usize, j: i64 },
    #[error("increase problem size: median {median_ns} ns is below 10 timer ticks of {tick_ns} ns")]
    TimerResolution { median_ns: u128, tick_ns: u128 },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    /// Stable machine-readable kind, used in CLI error records and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::EmptyTensor => "empty_tensor",
            Self::Shape(_) | Self::ChannelMismatch { .. } => "shape",
            Self::InvalidArgument(_) => "invalid_argument",
            Self::NonFinite(_) | Self::Diverged { .. } => "numeric",
            Self::NoInstances
            | Self::UnassignedSite { .. }
            | Self::EmptyInstance(_)
            | Self::DegenerateDice
            | Self::NoPositives
            | Self::NoPoints
            | Self::Infeasible(_) => "domain",
            Self::MissingFlow { .. } => "missing_input",
            Self::TimerResolution { .. } => "timer_resolution",
            Self::Format(_) | Self::Json(_) | Self::Csv(_) => "format",
            Self::Io(_) => "io",
        }
    }
}
