use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample of {n} points cannot be split into {bins} equal bins")]
    IndivisibleBinning { n: usize, bins: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate sample: median pairwise distance is zero")]
    DegenerateSample,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sample too small: need at least {need} points, got {got}")]
    SampleTooSmall { need: usize, got: usize },

    #[error("samples must have equal sizes (got {m} and {n})")]
    UnequalSizes { m: usize, n: usize },

    #[error("block size {block} does not divide sample size {n} (or leaves fewer blocks than required)")]
    IndivisibleBlocking { n: usize, block: usize },

    #[error("invalid pair design: {0}")]
    InvalidDesign(String),

    #[error("design of {ell} pairs exceeds the {max} available ordered pairs")]
    DesignTooLarge { ell: usize, max: usize },

    #[error("coreset {0} is empty")]
    EmptyCoreset(usize),

    #[error("invalid permutation of {0} elements")]
    InvalidPermutation(usize),

    #[error("kernel halving needs an even number of points, got {0}")]
    OddInput(usize),

    #[error("optimal four-point halving needs exactly 4 points, got {0}")]
    WrongArity(usize),

    #[error("input of {n} points is not 4^(g+t) for compression level g = {g}")]
    IncompatibleSize { n: usize, g: u32 },

    #[error("failure probability must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("no feasible compression-bin size: {0}")]
    NoFeasibleBinning(String),

    #[error("cannot group {compression_bins} compression bins into {permutation_bins} permutation bins")]
    GroupingError {
        compression_bins: usize,
        permutation_bins: usize,
    },

    #[error("kernel list is empty")]
    EmptyKernelList,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
