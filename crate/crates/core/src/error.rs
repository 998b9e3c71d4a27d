use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state space has {count} states, exceeding the cap of {cap}")]
    ResourceLimit { count: u128, cap: usize },

    #[error("state is not a member of the state space: {0}")]
    NotAMember(String),

    #[error("rank {rank} out of range for a space of {len} states")]
    OutOfRange { rank: usize, len: usize },

    #[error("state {rank} has zero exit rate")]
    AbsorbingState { rank: usize },

    #[error("chain is not irreducible on its reachable class: {0}")]
    Reducible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate normalization: {0}")]
    Degenerate(String),

    #[error("operation requires the no-full regime (NC < K)")]
    Regime,

    #[error("station index {index} out of range for {stations} stations")]
    StationIndex { index: usize, stations: usize },

    #[error("distributions are over different state spaces: {0}")]
    MismatchedSpace(String),

    #[error("conservation violated: component sum {found}, expected {expected}")]
    Conservation { found: u64, expected: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
