use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate range: joint minimum equals joint maximum ({0})")]
    DegenerateRange(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("field is not cubic: dims {0:?}")]
    NonCubicField([usize; 3]),

    #[error("dims {dims:?} are not divisible by {factor}")]
    IndivisibleDims { dims: Vec<usize>, factor: usize },

    #[error("field too small: {0}")]
    FieldTooSmall(String),

    #[error("PSNR is infinite: inputs are identical")]
    InfinitePsnr,

    #[error("input is constant")]
    ConstantInput,

    #[error("sequence too short: need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("calibration did not reach the band after {iterations} iterations (last delta {last_delta}, mean difficulty {last_difficulty})")]
    CalibrationDiverged {
        iterations: usize,
        last_delta: f64,
        last_difficulty: f64,
    },

    #[error("cutout out of bounds on axis {axis}: index {index} outside [0, {bound})")]
    OutOfBounds {
        axis: &'static str,
        index: i64,
        bound: usize,
    },

    #[error("sample stream is empty")]
    EmptyStream,

    #[error("ground truth distances are constant")]
    ConstantGroundTruth,

    #[error("slice size {slice} does not divide length {len}")]
    IndivisibleSliceSize { len: usize, slice: usize },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("truncated file: need {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("file has {0} trailing bytes after the declared payload")]
    TrailingData(u64),

    #[error("declared shape overflows addressable size")]
    ShapeOverflow,

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines and C error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateRange(_) => "DegenerateRange",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonCubicField(_) => "NonCubicField",
            Error::IndivisibleDims { .. } => "IndivisibleDims",
            Error::FieldTooSmall(_) => "FieldTooSmall",
            Error::InfinitePsnr => "InfinitePSNR",
            Error::ConstantInput => "ConstantInput",
            Error::TooShort { .. } => "TooShort",
            Error::UnknownParam(_) => "UnknownParam",
            Error::CalibrationDiverged { .. } => "CalibrationDiverged",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::EmptyStream => "EmptyStream",
            Error::ConstantGroundTruth => "ConstantGroundTruth",
            Error::IndivisibleSliceSize { .. } => "IndivisibleSliceSize",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::BadMagic(_) => "BadMagic",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::TrailingData(_) => "TrailingData",
            Error::ShapeOverflow => "ShapeOverflow",
            Error::ArchitectureMismatch(_) => "ArchitectureMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Maps an I/O error to [`Error::Io`] naming the file involved.
pub fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
