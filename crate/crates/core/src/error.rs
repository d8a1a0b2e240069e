use crate::tree::VertexId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mark law: {0}")]
    InvalidLaw(String),

    /// The law is not critical: E[sum of marks] differs from 1.
    #[error("law is not critical: rho(1) = {rho_one}")]
    NotCritical { rho_one: f64 },

    #[error("size-biased density is unbounded: parametric offspring needs an explicit n_max")]
    UnboundedDensity,

    #[error("vertex cap of {cap} exceeded")]
    SizeLimit { cap: usize },

    #[error("vertex {0} is not on the frontier")]
    NotFrontier(VertexId),

    #[error("vertex {0} has not been expanded")]
    Unexpanded(VertexId),

    #[error("tree not available to depth {requested} (materialized to {available})")]
    DepthUnavailable { requested: usize, available: usize },

    #[error("rho is not finite at t = {0}")]
    NonFinite(f64),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("walk is stranded at a childless root")]
    Extinct,

    #[error("drift condition fails: rho'(1) = {rho_prime_one} must be negative")]
    WrongDriftSign { rho_prime_one: f64 },

    #[error("trajectory and frame belong to different trees")]
    MismatchedTree,

    #[error("time {requested} is beyond the horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("worker pool: {0}")]
    Pool(String),
}
