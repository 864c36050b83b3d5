//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    // --- data ---
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("format violation: {0}")]
    FormatViolation(String),
    #[error("subject `{0}` is not listed in the manifest")]
    SubjectUnknown(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("window [{start}, {start}+{len}) exceeds trial length {n_samples}")]
    WindowOutOfRange {
        start: usize,
        len: usize,
        n_samples: usize,
    },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("stimulus {stimulus} has {available} trials, need more than {requested}")]
    InsufficientTrials {
        stimulus: usize,
        available: usize,
        requested: usize,
    },
    #[error("at least 2 calibration trials per stimulus are required, got {0}")]
    CalibTooSmall(usize),
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("invalid epoch set: {0}")]
    InvalidEpochs(String),

    // --- dsp ---
    #[error("frequency {freq} Hz is outside (0, {nyquist}) Hz")]
    FrequencyOutOfRange { freq: f64, nyquist: f64 },
    #[error("decimation factor must be >= 1")]
    InvalidFactor,
    #[error("filter bank needs at least one band")]
    InvalidBandCount,
    #[error("band edge {edge} Hz is not below Nyquist ({nyquist} Hz) or bands overlap the upper edge")]
    EdgeAboveNyquist { edge: f64, nyquist: f64 },
    #[error("filter designed for {filter_fs} Hz applied to data at {data_fs} Hz")]
    SampleRateMismatch { filter_fs: f64, data_fs: f64 },
    #[error("segment length {seg_len} exceeds signal length {len}")]
    SegmentTooLong { seg_len: usize, len: usize },

    // --- align ---
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("backward pass called with a cache from a different batch")]
    StaleCache,
    #[error("source and target stimulus sets differ: {0}")]
    StimulusMismatch(String),
    #[error("target stimulus {stimulus} has {available} calibration trials, need at least 2")]
    TargetTooFew { stimulus: usize, available: usize },
    #[error("training set is empty after the train/validation split")]
    EmptyTrainSet,
    #[error("no fitted transform for stimulus {0}")]
    MissingStimulusTransform(usize),
    #[error("least-squares system is rank deficient for stimulus {0}")]
    RankDeficient(usize),
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    // --- decode ---
    #[error("stimulus {stimulus} has {available} calibration trials, TRCA needs at least 2")]
    TooFewTrials { stimulus: usize, available: usize },
    #[error("covariance is singular for stimulus {stimulus}, band {band}")]
    SingularCovariance { stimulus: usize, band: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,

    // --- eval ---
    #[error("{0} non-zero paired differences, need at least 5")]
    TooFewPairs(usize),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("requested {requested} source subjects but only {available} are available")]
    CountExceedsSources { requested: usize, available: usize },
    #[error("failed to load subject `{subject}`: {reason}")]
    SubjectLoadFailure { subject: String, reason: String },
    #[error("fold hygiene violated: {0}")]
    HygieneViolation(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidConfig { .. }
            | SubjectUnknown(_)
            | UnknownChannel(_)
            | CalibTooSmall(_)
            | InvalidFactor
            | InvalidBandCount
            | EdgeAboveNyquist { .. }
            | FrequencyOutOfRange { .. }
            | SampleRateMismatch { .. }
            | SegmentTooLong { .. }
            | CountExceedsSources { .. }
            | WindowOutOfRange { .. } => ErrorCategory::Config,
            NonFiniteInput | SingularCovariance { .. } | RankDeficient(_) => {
                ErrorCategory::Numerical
            }
            _ => ErrorCategory::Data,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            MissingFile(_) => "MissingFile",
            FormatViolation(_) => "FormatViolation",
            SubjectUnknown(_) => "SubjectUnknown",
            IoFailure { .. } => "IoFailure",
            WindowOutOfRange { .. } => "WindowOutOfRange",
            UnknownChannel(_) => "UnknownChannel",
            InsufficientTrials { .. } => "InsufficientTrials",
            CalibTooSmall(_) => "CalibTooSmall",
            InvalidConfig { .. } => "InvalidConfig",
            InvalidEpochs(_) => "InvalidEpochs",
            FrequencyOutOfRange { .. } => "FrequencyOutOfRange",
            InvalidFactor => "InvalidFactor",
            InvalidBandCount => "InvalidBandCount",
            EdgeAboveNyquist { .. } => "EdgeAboveNyquist",
            SampleRateMismatch { .. } => "SampleRateMismatch",
            SegmentTooLong { .. } => "SegmentTooLong",
            ShapeMismatch(_) => "ShapeMismatch",
            NonFiniteInput => "NonFiniteInput",
            StaleCache => "StaleCache",
            StimulusMismatch(_) => "StimulusMismatch",
            TargetTooFew { .. } => "TargetTooFew",
            EmptyTrainSet => "EmptyTrainSet",
            MissingStimulusTransform(_) => "MissingStimulusTransform",
            RankDeficient(_) => "RankDeficient",
            ChecksumMismatch { .. } => "ChecksumMismatch",
            TooFewTrials { .. } => "TooFewTrials",
            SingularCovariance { .. } => "SingularCovariance",
            LengthMismatch(..) => "LengthMismatch",
            Empty => "Empty",
            TooFewPairs(_) => "TooFewPairs",
            AllZeroDifferences => "AllZeroDifferences",
            CountExceedsSources { .. } => "CountExceedsSources",
            SubjectLoadFailure { .. } => "SubjectLoadFailure",
            HygieneViolation(_) => "HygieneViolation",
        }
    }
}
