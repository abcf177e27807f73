//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: dimension mismatches, out-of-range parameters,
    /// family/cost disagreements, and similar caller mistakes.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A state, observation, or parameter became NaN or infinite.
    #[error("non-finite value at iteration {iteration}: {context}")]
    NonFinite { iteration: usize, context: String },

    /// A prior was constructed with no support points.
    #[error("prior has empty support")]
    EmptyPrior,

    /// An exact computation over a discrete prior would enumerate more
    /// profiles than the configured cap allows.
    #[error("prior support too large: {n_players} binary players exceeds cap of {cap}")]
    SupportTooLarge { n_players: usize, cap: usize },

    /// A noise or step schedule fails its positivity/shape requirements.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A requested target is impossible for the given parameters
    /// (e.g. it exceeds a hard ceiling), so no search is attempted.
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    /// A search ran to its limit without meeting the target.
    #[error("target not reached: {0}")]
    NotReached(String),

    /// A direction vector required to be nonzero was (numerically) zero.
    #[error("zero vector: {0}")]
    ZeroVector(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
