use thiserror::Error;

pub type Result<T> = std::result::Result<T, ZrpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZrpError {
    #[error("state space too large: {0}")]
    SizeOverflow(String),
    #[error("state space has {states} states, above the exact-computation cap of {cap}; use simulation instead")]
    BudgetExceeded { states: u64, cap: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is not stochastic: {0}")]
    NotStochastic(String),
    #[error("jump matrix is not irreducible: {components} strongly connected components")]
    NotIrreducible { components: usize },
    #[error("jump matrix is not doubly stochastic")]
    NotDoublyStochastic,
    #[error("rates are not homogeneous across sites")]
    NotHomogeneous,
    #[error("jump matrices do not share the same stationary law (max deviation {deviation:e})")]
    MismatchedStationaryLaw { deviation: f64 },
    #[error("reference form is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid rates: {0}")]
    InvalidRates(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("distance is not monotone in time: d({t_early}) = {d_early:e} < d({t_late}) = {d_late:e}")]
    NonMonotone {
        t_early: f64,
        d_early: f64,
        t_late: f64,
        d_late: f64,
    },
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

impl ZrpError {
    /// Field-level validation failures, as opposed to size or convergence limits.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            ZrpError::BudgetExceeded { .. } | ZrpError::SizeOverflow(_) | ZrpError::NoConvergence(_)
        )
    }
}
