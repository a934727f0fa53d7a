use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rationality coefficient must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("discount must lie in [0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("reward table contains a non-finite entry")]
    NonFiniteReward,
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("stopping time {t} outside 0..={max}")]
    StopOutOfRange { t: usize, max: usize },
    #[error("invalid reward vector: {0}")]
    InvalidReward(String),
    #[error("degenerate posterior: no grid point has positive likelihood")]
    DegeneratePosterior,
    #[error("regret undefined: optimal and random returns coincide")]
    DegenerateRegret,
    #[error("objective is flat in beta; the responses carry no rationality information")]
    FlatObjective,
    #[error("calibration set mixes feedback kinds ({0} and {1})")]
    MixedKinds(&'static str, &'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

pub(crate) fn check_discount(discount: f64) -> Result<()> {
    if (0.0..=1.0).contains(&discount) {
        Ok(())
    } else {
        Err(Error::InvalidDiscount(discount))
    }
}
