use thiserror::Error;

/// Failures raised by the dynamics, covariance and planning routines.
///
/// Infeasible designs are not errors; they are reported as data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The position-from-velocity block of the transition matrix cannot be inverted
    /// for this transfer duration (zero duration or a whole number of orbits).
    #[error("singular transfer on leg {leg} (duration {dt_s} s, condition number {condition:e})")]
    SingularTransfer { leg: usize, dt_s: f64, condition: f64 },

    /// The denominator of the covariance fraction update is numerically singular.
    #[error("singular covariance propagation over {dt_s} s (condition number {condition:e})")]
    SingularPropagation { dt_s: f64, condition: f64 },

    #[error("matrix exponential overflowed")]
    NonFinite,

    #[error("no stabilizing Riccati solution (residual {residual:e})")]
    NoStabilizingSolution { residual: f64 },

    /// The initial state of a coast already violates the safe corridor.
    #[error("initial state at t = {t_s} s lies outside the safe corridor")]
    NeverInCorridor { t_s: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
