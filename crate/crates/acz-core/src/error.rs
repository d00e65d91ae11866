//! Crate error type. Domain violations are errors; physics regime warnings
//! (e.g. using the quadratic shift close to resonance) are flags on results.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its mathematical domain.
    #[error("domain: {0}")]
    Domain(String),

    /// A parameter is NaN or infinite where finiteness is required.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// An iterative routine failed to reach its tolerance.
    #[error("convergence: {0}")]
    Convergence(String),

    /// A grid does not satisfy a structural precondition (uniform, sorted, ...).
    #[error("grid: {0}")]
    Grid(String),

    /// Every element of a batch operation failed.
    #[error("dataset: {0}")]
    Dataset(String),

    /// Configuration failed validation; one message per violation.
    #[error("config validation failed:\n{}", .0.join("\n"))]
    ConfigValidation(Vec<String>),

    /// Configuration file could not be parsed.
    #[error("config parse: {0}")]
    ConfigParse(String),

    /// Malformed on-disk artifact (trace CSV, manifest, map).
    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class tag, used in CLI stderr lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non-finite",
            Error::Convergence(_) => "convergence",
            Error::Grid(_) => "grid",
            Error::Dataset(_) => "dataset",
            Error::ConfigValidation(_) => "config-validation",
            Error::ConfigParse(_) => "config-parse",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code class: 1 for validation/domain trouble, 2 for runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::NonFinite(_)
            | Error::Grid(_)
            | Error::ConfigValidation(_)
            | Error::ConfigParse(_) => 1,
            Error::Convergence(_) | Error::Dataset(_) | Error::Format(_) | Error::Io(_) => 2,
        }
    }
}

/// Checks that every listed value is finite; names are reported on failure.
pub fn ensure_finite(pairs: &[(&str, f64)]) -> crate::Result<()> {
    for (name, v) in pairs {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(())
}
