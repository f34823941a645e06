//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
///
/// Variants are grouped by failure class rather than by module so that the
/// command-line layer can map them onto its exit-code categories
/// (configuration error vs. numerical failure) without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter {
        /// Name of the offending parameter.
        name: &'static str,
        /// Human-readable description of the violated precondition.
        message: String,
    },

    /// A requested quantity is genuinely divergent at the requested point
    /// (e.g. a golden-rule rate at the band-centre van Hove singularity).
    #[error("{what} diverges: {detail}")]
    Divergence {
        /// The quantity that diverges.
        what: &'static str,
        /// Where and why.
        detail: String,
    },

    /// An iterative procedure (root finding, quadrature refinement, …) failed
    /// to reach its tolerance.
    #[error("{what} failed to converge: {detail}")]
    ConvergenceFailure {
        /// The procedure that failed.
        what: &'static str,
        /// Diagnostic detail (residual, iteration count, …).
        detail: String,
    },

    /// The propagated state lost unitarity beyond the accepted tolerance.
    #[error(
        "norm drift {drift:.3e} exceeded tolerance {tolerance:.3e} at t = {time:.6} \
         (step {step}); reduce the time step or shorten the run"
    )]
    NormDrift {
        /// Measured |norm − 1|.
        drift: f64,
        /// Configured tolerance.
        tolerance: f64,
        /// Simulation time at which the check tripped.
        time: f64,
        /// Step index at which the check tripped.
        step: usize,
    },

    /// An analysis routine declined to produce a number because the supplied
    /// data do not look like the regime the routine is specified for.
    #[error("analysis refused: {reason}")]
    AnalysisRefused {
        /// Why the data were rejected.
        reason: String,
    },

    /// Filesystem error while writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for [`Error::InvalidParameter`].
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}
