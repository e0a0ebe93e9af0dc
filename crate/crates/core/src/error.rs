use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Arithmetic mixing volts and LSB amplitudes.
    #[error("amplitude unit mismatch: {0:?} vs {1:?}")]
    UnitMismatch(
        crate::waveform::AmplitudeUnit,
        crate::waveform::AmplitudeUnit,
    ),

    /// Operands sampled at different rates.
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),

    /// Operands of incompatible length.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// Resampling would fold signal content above the new Nyquist rate.
    #[error("aliasing risk: occupied bandwidth {occupied_hz:.3e} Hz needs rate above {:.3e} Hz", 2.0 * occupied_hz)]
    AliasingRisk { occupied_hz: f64 },

    /// An image peak sits on the raster boundary; widths cannot be measured.
    #[error("peak on raster boundary at bin ({0}, {1})")]
    PeakOnBoundary(usize, usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or truncated data container.
    #[error("bad container: {0}")]
    BadContainer(String),
}

pub type Result<T> = std::result::Result<T, Error>;
