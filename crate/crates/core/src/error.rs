//! Error type shared by every stage of the memory pipeline.

use std::fmt;

/// Errors raised by token kernels, memory buffers, stream I/O, and snapshot
/// assembly. Degenerate numeric inputs are surfaced rather than masked: a
/// zero-norm token would silently corrupt the greedy merge argmax, so it is
/// always an error.
#[derive(Debug)]
pub enum Error {
    /// A token entry was NaN or infinite.
    NonFinite,
    /// Vector or frame shapes disagree (token dimension or tokens-per-frame).
    DimensionMismatch { expected: usize, actual: usize },
    /// A token's L2 norm is below the degeneracy threshold (1e-12), making
    /// cosine similarity undefined.
    ZeroVector { token_index: usize },
    /// Two frames asked to merge do not cover contiguous source ranges.
    NonAdjacent { left_last: u64, right_first: u64 },
    /// A frame was pushed out of stream order.
    OutOfOrder { expected: u64, actual: u64 },
    /// Only raw (weight 1) frames may enter short-term memory.
    WeightNotOne { weight: u64 },
    /// Consolidation target exceeds the tokens available in the batch.
    TargetTooLarge { target: usize, available: usize },
    /// Consolidation target is not a multiple of the tokens-per-frame count.
    TargetNotMultiple {
        target: usize,
        tokens_per_frame: usize,
    },
    /// Consolidation target is below one frame's worth of tokens; merging
    /// can never reduce a batch past a single frame.
    TargetTooSmall { target: usize, minimum: usize },
    /// Appending would push the long-term store past its addressable
    /// positional range (base length squared).
    PositionalOverflow { requested: usize, max: usize },
    /// Appended frames do not continue the stored source-range coverage.
    CoverageGap { expected: u64, actual: u64 },
    /// Positional index outside [0, n^2).
    IndexOutOfRange { index: usize, max: usize },
    /// A binary file did not start with the expected magic bytes.
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    /// File declares a format version this build does not understand.
    UnsupportedVersion { found: u32 },
    /// File payload shorter or longer than its header declares.
    TruncatedPayload { expected: u64, actual: u64 },
    /// Unknown mode tag in a snapshot file.
    InvalidMode { found: String },
    /// Unknown provenance tag in a snapshot file.
    InvalidProvenance { found: String },
    /// A file parsed but its contents are internally inconsistent.
    Malformed { detail: String },
    /// The current frame handed to breakpoint assembly does not follow the
    /// newest short-term frame.
    StaleCurrent { newest: u64, current: u64 },
    /// A configuration value violates its documented constraints.
    InvalidConfig { reason: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for structured error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ZeroVector { .. } => "zero_vector",
            Error::NonAdjacent { .. } => "non_adjacent",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::WeightNotOne { .. } => "weight_not_one",
            Error::TargetTooLarge { .. } => "target_too_large",
            Error::TargetNotMultiple { .. } => "target_not_multiple",
            Error::TargetTooSmall { .. } => "target_too_small",
            Error::PositionalOverflow { .. } => "positional_overflow",
            Error::CoverageGap { .. } => "coverage_gap",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::InvalidMode { .. } => "invalid_mode",
            Error::InvalidProvenance { .. } => "invalid_provenance",
            Error::Malformed { .. } => "malformed_file",
            Error::StaleCurrent { .. } => "stale_current",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::Io(_) => "io_failure",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite => write!(f, "token contains a NaN or infinite entry"),
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Error::ZeroVector { token_index } => {
                write!(f, "token {token_index} has near-zero norm; cosine undefined")
            }
            Error::NonAdjacent { left_last, right_first } => write!(
                f,
                "frames are not adjacent: left ends at {left_last}, right starts at {right_first}"
            ),
            Error::OutOfOrder { expected, actual } => {
                write!(f, "frame out of order: expected index {expected}, got {actual}")
            }
            Error::WeightNotOne { weight } => {
                write!(f, "short-term memory accepts only raw frames; got weight {weight}")
            }
            Error::TargetTooLarge { target, available } => write!(
                f,
                "consolidation target {target} exceeds available {available} tokens"
            ),
            Error::TargetNotMultiple { target, tokens_per_frame } => write!(
                f,
                "consolidation target {target} is not a multiple of {tokens_per_frame} tokens per frame"
            ),
            Error::TargetTooSmall { target, minimum } => write!(
                f,
                "consolidation target {target} is below the one-frame minimum of {minimum} tokens"
            ),
            Error::PositionalOverflow { requested, max } => write!(
                f,
                "long-term memory would hold {requested} tokens, past the positional limit {max}"
            ),
            Error::CoverageGap { expected, actual } => write!(
                f,
                "source coverage gap: expected frames to continue at {expected}, got {actual}"
            ),
            Error::IndexOutOfRange { index, max } => {
                write!(f, "positional index {index} outside [0, {max})")
            }
            Error::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                found
            ),
            Error::UnsupportedVersion { found } => {
                write!(f, "unsupported format version {found}")
            }
            Error::TruncatedPayload { expected, actual } => {
                write!(f, "payload size mismatch: header declares {expected} bytes, file has {actual}")
            }
            Error::InvalidMode { found } => write!(f, "unknown snapshot mode {found}"),
            Error::InvalidProvenance { found } => {
                write!(f, "unknown provenance tag {found}")
            }
            Error::Malformed { detail } => write!(f, "malformed file: {detail}"),
            Error::StaleCurrent { newest, current } => write!(
                f,
                "current frame {current} does not follow newest short-term frame {newest}"
            ),
            Error::InvalidConfig { reason } => write!(f, "invalid configuration: {reason}"),
            Error::Io(e) => write!(f, "I/O failure: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
