use thiserror::Error;

use crate::value::Player;

pub type Result<T, E = GameError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The expected discounted running flow is infinite.
    #[error("integrability violated for {what}: discount {rate} must exceed {bound}")]
    IntegrabilityViolation {
        what: &'static str,
        rate: f64,
        bound: f64,
    },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("x = {x} outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("derivative requested at kink x = {x}; pass an explicit side")]
    KinkDerivative { x: f64 },

    #[error("degenerate corner-value system for the {player}: determinant {determinant:e}")]
    DegenerateThresholds { player: Player, determinant: f64 },

    #[error("no interior stationary point for the {player}: rate {rate} <= drift {mu}")]
    NoStationaryPoint { player: Player, rate: f64, mu: f64 },

    #[error("non-finite residual at {0:?}")]
    NonFiniteResidual([f64; 4]),

    #[error("Newton did not converge in {iterations} iterations (best sup-norm {best_norm:e} at {best:?})")]
    MaxIterExceeded {
        iterations: usize,
        best: [f64; 4],
        best_norm: f64,
    },

    #[error("line search stalled at {at:?} (sup-norm {norm:e})")]
    Stalled { at: [f64; 4], norm: f64 },

    #[error("singular Jacobian at {0:?}")]
    SingularJacobian([f64; 4]),

    #[error("single-agent problem for the {player} has no root (best residuals {best_residuals:?})")]
    NoBaselineRoot {
        player: Player,
        best_residuals: [f64; 2],
    },

    /// Unreadable or malformed configuration.
    #[error("configuration: {0}")]
    Config(String),

    #[error("simulation failed: {0}")]
    Simulation(String),
}
