use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions {width}x{height} below minimum {min}x{min}")]
    DimensionTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("plane dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("buffer length {len} does not match {width}x{height}")]
    BufferSizeMismatch {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("non-finite intensity value at index {0}")]
    NonFiniteValue(usize),
    #[error("channel shift {shift_px:.2} px exceeds frame limit {limit_px:.2} px")]
    ShiftExceedsFrame { shift_px: f64, limit_px: f64 },
    #[error("z-stack needs an odd number of steps >= 3, got {0}")]
    EvenSteps(usize),
    #[error("no pixels above the denominator floor; cannot estimate crosstalk")]
    NoValidPixels,
    #[error("crosstalk mixing is singular: |1 - w_gr*w_rg| = {0:.2e}")]
    SingularMixing(f64),
    #[error("image has zero variance after subsampling")]
    FlatImage,
    #[error("correlation peak at lag window boundary ({0}); increase max_lag")]
    PeakAtBoundary(i64),
    #[error("mutual information became non-finite")]
    NonFiniteMi,
    #[error("shift estimate {shift:.2} px left the search window (+/-{bound:.2} px)")]
    Divergence { shift: f64, bound: f64 },
    #[error("image width {0} too narrow for the gradient offset")]
    ImageTooNarrow(usize),
    #[error("all focus scores are zero")]
    AllZeroScores,
    #[error("calibration span {0:.3} um below the required {1:.3} um")]
    DegenerateSpan(f64, f64),
    #[error("calibration fit is rank-deficient (needs >= 3 samples with distinct defocus)")]
    RankDeficient,
    #[error("report contains no tiles")]
    EmptyReport,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
