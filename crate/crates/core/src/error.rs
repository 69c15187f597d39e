use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // signal model
    #[error("invalid montage: {0}")]
    InvalidMontage(String),
    #[error("event {index} onset {onset} outside [0, {n_samples})")]
    EventOutOfRange {
        index: usize,
        onset: usize,
        n_samples: usize,
    },
    #[error("events not sorted at index {0}")]
    EventsUnsorted(usize),
    #[error("non-finite sample at channel {0}, time {1}")]
    NonFiniteSample(usize, usize),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeatureName(String),
    #[error("non-finite feature value at row {0}, column {1}")]
    NonFiniteFeature(usize, usize),
    #[error("invalid band `{0}`")]
    InvalidBand(String),
    #[error("task {0} is only valid for assembled features")]
    CombinedTaskRecording(String),

    // preprocess
    #[error("bad band edges: low {f_low} Hz, high {f_high} Hz, fs {fs} Hz")]
    BadBandEdges { f_low: f64, f_high: f64, fs: f64 },
    #[error("tap count must be odd, got {0}")]
    EvenTapCount(usize),
    #[error("tap count {0} below minimum {1}")]
    TooFewTaps(usize, usize),
    #[error("signal of length {len} too short (need more than {required})")]
    SignalTooShort { len: usize, required: usize },
    #[error("epoch for trial {0} falls outside the recording")]
    EpochOutOfBounds(usize),
    #[error("need more than {required} trials, have {have}")]
    TooFewTrials { have: usize, required: usize },
    #[error("{trials} trials not divisible by group size {group}")]
    IndivisibleTrialCount { trials: usize, group: usize },
    #[error("trials in one averaging group carry different metadata (group {0})")]
    MixedMetadata(usize),

    // spectral
    #[error("band [{f_low}, {f_high}] outside total range [{total_low}, {total_high}]")]
    BandOutsideTotal {
        f_low: f64,
        f_high: f64,
        total_low: f64,
        total_high: f64,
    },
    #[error("zero total power in reference range")]
    ZeroTotalPower,

    // stats
    #[error("too few samples: need at least {required}, got {have}")]
    TooFewSamples { have: usize, required: usize },
    #[error("too few groups: need at least {required}, got {have}")]
    TooFewGroups { have: usize, required: usize },
    #[error("no feature survives selection at alpha {0}")]
    NoFeatureSurvives(f64),
    #[error("expected exactly two classes, found {0}")]
    NotTwoClasses(usize),

    // linear algebra / fbcsp
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty class")]
    EmptyClass,
    #[error("invalid k = {k} for {n_features} features")]
    BadK { k: usize, n_features: usize },

    // ml
    #[error("degenerate data: zero total variance")]
    DegenerateData,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),

    // eval
    #[error("need at least {required} subjects per class, class {label} has {have}")]
    TooFewSubjects {
        label: String,
        have: usize,
        required: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("subject/sample alignment differs between task matrices: {0}")]
    SubjectMismatch(String),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<Error> },

    // synth
    #[error("bad profile: {0}")]
    BadProfile(String),

    // io / cli
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable kind, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Parse { .. } => "ParseError",
            Error::Config(_) => "ConfigError",
            Error::Fold { source, .. } => source.kind(),
            _ => "ComputationError",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }
}
