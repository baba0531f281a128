//! Error types shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Substrate index ≤ 1 cannot produce a phase step.
    #[error("no phase contrast: substrate index {0} must exceed 1")]
    NoPhaseContrast(f64),

    /// Pupil sampling too coarse for the diffraction kernel.
    #[error("pupil undersampled: {0}")]
    Aliasing(String),

    #[error("failed to converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("expected two spots, found {0}")]
    SpotCount(usize),

    #[error("spots unresolvable: separation {separation_px:.2} px < 2 x FWHM {fwhm_px:.2} px")]
    Unresolvable { separation_px: f64, fwhm_px: f64 },

    #[error("fit did not converge")]
    FitNotConverged,

    #[error("degenerate region of interest: zero variance")]
    FlatField,

    #[error("zero displacement: relative discrepancy undefined")]
    ZeroDisplacement,

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("parse error at {path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the JSON error objects the CLI emits.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NoPhaseContrast(_) => "no_phase_contrast",
            Error::Aliasing(_) => "aliasing",
            Error::Convergence { .. } => "convergence",
            Error::SpotCount(_) => "spot_count",
            Error::Unresolvable { .. } => "unresolvable",
            Error::FitNotConverged => "fit_not_converged",
            Error::FlatField => "flat_field",
            Error::ZeroDisplacement => "zero_displacement",
            Error::Scenario(_) => "scenario",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code per the CLI contract: 2 for input/validation
    /// problems, 3 for numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::FitNotConverged => 3,
            _ => 2,
        }
    }
}

/// Rejects non-finite or non-positive values for a named parameter.
pub fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and positive, got {value}"
        )));
    }
    Ok(())
}

/// Rejects non-finite values.
pub fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {value}"
        )));
    }
    Ok(())
}
