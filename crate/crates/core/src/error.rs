use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of configurations/velocities do not match the mass system.
    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// Invalid construction parameters (non-positive mass, dim < 2, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An operation that requires a collision-free configuration got one
    /// with a pair distance at or below the collision tolerance.
    #[error("configuration has collisions (min separation {min_sep:.3e} <= tol {tol:.3e})")]
    Collision { min_sep: f64, tol: f64 },

    /// Root bracketing failed (no sign change in the search span).
    #[error("bracketing failed: {0}")]
    Bracket(String),

    /// The declared bound is inconsistent (e.g. complex roots of the
    /// free-time bracket polynomial).
    #[error("inconsistent bound: {0}")]
    InconsistentBound(String),

    /// Every restart of a minimization got stuck; diagnostics attached.
    #[error("search failure: {0}")]
    SearchFailure(String),

    /// An iterative scheme did not converge within its schedule.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// A least-squares design was too ill-conditioned to solve.
    #[error("ill-conditioned fit: {0}")]
    Conditioning(String),

    /// Data fed to an analysis violates its stated preconditions
    /// (e.g. energy mismatch beyond the drift budget).
    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    /// A monotone branch was requested where the motion is not monotone.
    #[error("branch error: {0}")]
    Branch(String),

    /// A calibrating curve could not be produced (backward integration
    /// hit a collision or the velocity sequence did not settle).
    #[error("calibration unavailable: {0}")]
    CalibrationUnavailable(String),

    /// Work budget exhausted before the requested accuracy was met.
    #[error("budget exhausted: {0}")]
    Budget(String),

    /// A rectilinear orbit reaches its collision inside the requested
    /// span; the time of the singularity is attached.
    #[error("finite-time singularity: collision at t = {t_collision}")]
    FiniteTimeSingularity { t_collision: f64 },
}
