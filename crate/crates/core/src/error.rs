use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameters outside the oscillatory regime: {0}")]
    RegimeViolation(String),

    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("slow orbit evaluated at the fold point")]
    SingularityAtFold,

    #[error("layer shooting failed: {0}")]
    ShootingFailure(String),

    #[error("argument outside the supported half-plane: Re(z) = {0} < -1")]
    DomainError(f64),

    #[error("branch jump between consecutive samples at rho = {rho} (|dlambda| = {jump:e})")]
    BranchJump { rho: f64, jump: f64 },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("relaxation stalled: time-derivative norm {0:e} above threshold")]
    NoRelaxation(f64),

    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("singular Jacobian: {0}")]
    JacobianSingular(String),

    #[error("continuation step failed below the minimum step size at parameter {0}")]
    StepFailure(f64),

    #[error("eigenvalue tracking ambiguous at rho = {rho}: candidates {first} and {second}")]
    TrackingAmbiguity { rho: f64, first: String, second: String },

    #[error("Fredholm solvability pairing vanishes: {0:e}")]
    SolvabilityFailure(f64),

    #[error("simulation blew up at t = {t} (max |u| = {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("wave train does not embed in the simulation grid: {0}")]
    DomainMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
