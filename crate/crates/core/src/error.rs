use thiserror::Error;

/// Errors raised by the library.
///
/// Numerical outcomes such as non-convergence or an empty hit count are not
/// errors; they are reported as flags on the corresponding result types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes that must agree do not (grid vs. value count, sequence lengths).
    #[error("structural mismatch: {0}")]
    Structure(String),
    /// A value is non-finite or outside its documented range.
    #[error("invalid input: {0}")]
    Input(String),
    /// The objective is not finite at the supplied point, or a point violates
    /// the constraints it is supposed to satisfy.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be a positive finite number, got {value}")))
    }
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Input(format!("{name}[{i}] is not finite ({})", values[i]))),
    }
}
