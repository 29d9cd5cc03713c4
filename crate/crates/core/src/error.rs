//! Error type shared by every module in the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Numerical routines distinguish between *contract* violations (shape or
/// group mismatches, invalid arguments) and *analysis* outcomes that a caller
/// may want to handle, such as instability or an ill-conditioned solve.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A named channel group is missing, overlapping, or out of range.
    #[error("channel group error: {0}")]
    Group(String),

    /// An operation that requires a Hurwitz matrix received an unstable one.
    #[error("stable system required (spectral abscissa {abscissa:.6e})")]
    Unstable { abscissa: f64 },

    /// The requested norm is infinite because of a direct feedthrough term.
    #[error("direct feedthrough present; this norm is infinite")]
    InfiniteNorm,

    /// The frequency response could not be evaluated reliably.
    #[error("frequency response ill conditioned at omega = {omega:.6e} (rcond {rcond:.3e})")]
    Resonance { omega: f64, rcond: f64 },

    /// A linear solve was abandoned because the matrix is near singular.
    #[error("matrix too ill conditioned (rcond {rcond:.3e})")]
    Conditioning { rcond: f64 },

    /// A feedback interconnection has no unique solution.
    #[error("interconnection not well posed: {0}")]
    WellPosed(String),

    /// A point lies outside the admissible box of its parameter domain.
    #[error("point outside admissible domain: {0}")]
    Domain(String),

    /// Problem size exceeds what the dense solver is willing to handle.
    #[error("state dimension {n} exceeds supported cap {cap}")]
    TooLarge { n: usize, cap: usize },

    /// Surrogate-model fitting failed.
    #[error("fit failed: {0}")]
    Fit(String),

    /// No restart produced a controller stabilizing every local model.
    #[error("synthesis failed to stabilize all local models (best spectral abscissa {best_abscissa:.6e})")]
    Synthesis { best_abscissa: f64 },

    /// The outer design loop failed after it had already grown the grid.
    /// Carries everything built up to the failure so callers can persist it.
    #[error("design loop aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        source: Box<Error>,
        partial: Box<crate::allocation::PartialAllocation>,
    },

    /// An iterative linear-algebra kernel did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Serialized data did not match the expected schema.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
