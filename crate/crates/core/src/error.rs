use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{branch} mode {mode} is unstable (eigenvalue {eigenvalue:.6e} in units of axial frequency squared)")]
    Unstable {
        branch: &'static str,
        mode: usize,
        eigenvalue: f64,
    },

    #[error("spline basis needs at least one free parameter")]
    NoFreeParameters,

    #[error("time {t:.6e} s outside pulse interval [{t0:.6e}, {tf:.6e}]")]
    OutOfDomain { t: f64, t0: f64, tf: f64 },

    #[error("infeasible at t_gate={t_gate:.6e} s, mu={mu:.6e} rad/s: trivial nullspace (smallest singular value {sigma_min:.3e})")]
    Infeasible {
        t_gate: f64,
        mu: f64,
        sigma_min: f64,
    },

    #[error("phase {phi} unreachable: quadratic form has no eigenvalue of the required sign (extreme eigenvalue {extreme:.3e})")]
    PhaseUnreachable { phi: f64, extreme: f64 },

    #[error("pulse outside allowed area: |omega|={value:.6e} exceeds C*mu={limit:.6e} at t={time:.6e} s (margin {margin:.3e})")]
    OutsideAllowedArea {
        time: f64,
        value: f64,
        limit: f64,
        margin: f64,
    },

    #[error("simulation space of dimension {dim} exceeds cap {cap}; try cutoffs {suggested:?}")]
    SpaceTooLarge {
        dim: usize,
        cap: usize,
        suggested: Vec<usize>,
    },

    #[error("step halving did not converge: fidelity {coarse:.12} vs {fine:.12}")]
    StepConvergence { coarse: f64, fine: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. }
            | Error::PhaseUnreachable { .. }
            | Error::OutsideAllowedArea { .. } => 2,
            Error::NonConvergence { .. } | Error::StepConvergence { .. } => 3,
            Error::Config { .. } => 4,
            Error::Io(_) | Error::Json(_) => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Unstable { .. } => "unstable_chain",
            Error::NoFreeParameters => "no_free_parameters",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Infeasible { .. } => "infeasible",
            Error::PhaseUnreachable { .. } => "phase_unreachable",
            Error::OutsideAllowedArea { .. } => "outside_allowed_area",
            Error::SpaceTooLarge { .. } => "space_too_large",
            Error::StepConvergence { .. } => "step_convergence",
            Error::Invalid(_) => "invalid_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
