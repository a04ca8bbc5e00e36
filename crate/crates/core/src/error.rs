use thiserror::Error;

/// Process exit code for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Process exit code when a run enters the non-existence regime.
pub const EXIT_NONEXISTENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("kernel symbol is singular at k = 0")]
    SingularAtZero,

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("sum-of-Gaussians fit reached {achieved:.3e} > eps0 = {eps0:.3e} with {terms} terms")]
    FitFailure { eps0: f64, achieved: f64, terms: usize },

    #[error("tensor cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("grid too large for direct quadrature: {points} points (limit {limit})")]
    GridTooLarge { points: usize, limit: usize },

    #[error("preconditioner is near singular (min |diag| = {0:.3e})")]
    SingularPreconditioner(f64),

    #[error("inner solver failed after {iterations} iterations (last residual {last:.3e})")]
    InnerSolverDiverged { iterations: usize, last: f64, residuals: Vec<f64> },

    #[error("ground state does not exist for these parameters: {0}")]
    NonexistenceRegime(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("numerical instability at t = {t}: {reason}")]
    Instability { t: f64, reason: String },

    #[error("trajectory too short: {0} samples, need at least 3")]
    TrajectoryTooShort(usize),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unknown plot kind `{0}`")]
    UnknownPlotKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config { key: key.to_string(), reason: reason.into() }
    }

    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonexistenceRegime(_) => EXIT_NONEXISTENCE,
            Error::InvalidGrid(_)
            | Error::InvalidParameter { .. }
            | Error::UnsupportedKernel(_)
            | Error::Config { .. }
            | Error::Format(_)
            | Error::UnknownPlotKind(_)
            | Error::CacheMismatch(_)
            | Error::GridTooLarge { .. }
            | Error::TrajectoryTooShort(_)
            | Error::Io(_) => EXIT_CONFIG,
            Error::SingularAtZero
            | Error::FitFailure { .. }
            | Error::SingularPreconditioner(_)
            | Error::InnerSolverDiverged { .. }
            | Error::Divergence(_)
            | Error::Instability { .. } => EXIT_NUMERICAL,
        }
    }

    /// Short stable identifier for machine readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::SingularAtZero => "singular_at_zero",
            Error::UnsupportedKernel(_) => "unsupported_kernel",
            Error::FitFailure { .. } => "fit_failure",
            Error::CacheMismatch(_) => "cache_mismatch",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::SingularPreconditioner(_) => "singular_preconditioner",
            Error::InnerSolverDiverged { .. } => "inner_solver_diverged",
            Error::NonexistenceRegime(_) => "nonexistence_regime",
            Error::Divergence(_) => "divergence",
            Error::Instability { .. } => "instability",
            Error::TrajectoryTooShort(_) => "trajectory_too_short",
            Error::Config { .. } => "config",
            Error::Format(_) => "format",
            Error::UnknownPlotKind(_) => "unknown_plot_kind",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
