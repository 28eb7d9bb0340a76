use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {arg} = {value} is outside the convergent domain of {function}")]
    DivergenceGuard {
        function: &'static str,
        arg: &'static str,
        value: f64,
    },

    #[error("{function} has a pole at {value}")]
    Pole { function: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncated tail contribution {tail:e} is too large relative to {value:e}")]
    Divergence { tail: f64, value: f64 },

    #[error("no sign change on bracket [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("blow-up at t = {t} (observed value {value:e})")]
    BlowUp { t: f64, value: f64 },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("convergence condition violated: {0}")]
    ConditionViolated(String),

    #[error("profile became unstable at x = {x} (|F| = {value:e})")]
    Instability { x: f64, value: f64 },

    #[error("rates {i} and {j} collided at t = {t}; replace the pair by a merged term before continuing")]
    RateCollision { i: usize, j: usize, t: f64 },

    #[error("negative radicand {radicand:e} at t = {t}")]
    Branch { t: f64, radicand: f64 },

    #[error("value {value} has zero probability at level {level}")]
    Support { level: usize, value: usize },

    #[error("argument {arg} outside the tabulated domain [0, {limit}]")]
    Domain { arg: f64, limit: f64 },

    #[error("branching rate could not be evaluated: {0}")]
    RateEvaluation(String),
}
