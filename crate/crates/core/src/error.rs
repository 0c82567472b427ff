use thiserror::Error;

/// Error taxonomy shared across the crate.
#[derive(Debug, Error)]
pub enum CwmiError {
    #[error("image size {height}x{width} is not divisible by 2^{levels}")]
    NotDivisible {
        height: usize,
        width: usize,
        levels: usize,
    },
    #[error("invalid pyramid configuration: {0}")]
    InvalidPyramid(&'static str),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("matrix is not positive definite (leading minor {minor} failed)")]
    NotPositiveDefinite { minor: usize },
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("degenerate statistics: {samples} samples for {dims}-dimensional variable")]
    DegenerateStatistics { samples: usize, dims: usize },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask has no foreground pixels")]
    EmptyForeground,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CwmiError> = std::result::Result<T, E>;

pub(crate) fn check_shape(expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        return Err(CwmiError::ShapeMismatch {
            expected: expected.to_vec(),
            found: found.to_vec(),
        });
    }
    Ok(())
}
