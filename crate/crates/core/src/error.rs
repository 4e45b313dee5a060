use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "drive is degenerate at t = {t}: all amplitudes vanish, the adiabatic frame is undefined"
    )]
    DegenerateDrive { t: f64 },

    #[error("interaction-picture exponent Γ₀(t - t_i) = {exponent} exceeds {limit}; parameters are nonphysical")]
    PictureOverflow { exponent: f64, limit: f64 },

    #[error("step too coarse at t = {t}: dt·‖H‖ = {product} exceeds {limit}")]
    StepTooCoarse { t: f64, product: f64, limit: f64 },

    #[error("density matrix lost positivity at t = {t}: smallest eigenvalue {min_eigenvalue}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },

    #[error("adiabaticity violated at t = {t}: population outside the dark subspace is {leak} (threshold {threshold})")]
    AdiabaticityViolation { t: f64, leak: f64, threshold: f64 },

    #[error("state has no |0⟩ component (|⟨0|ψ⟩| = {overlap}); a dephasing jump is impossible")]
    ZeroJumpComponent { overlap: f64 },

    #[error("target phase {target} is unreachable: the shortest admissible gap already gives {reachable}")]
    UnreachablePhase { target: f64, reachable: f64 },

    #[error("input is not a valid density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
