use thiserror::Error;

use crate::history::RunRecord;
use crate::model::GaussianPolicy;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate covariance")]
    DegenerateCovariance,

    #[error("inadmissible gain (divergent series): gamma * V_K = {gamma_v}")]
    InadmissibleGain { gamma_v: f64 },

    #[error("trajectory diverged at step {step}")]
    TrajectoryDiverged { step: usize },

    #[error("ARE value iteration failed after {iterations} iterations: {reason}")]
    AreFailed { iterations: usize, reason: String },

    #[error("solved policy outside the admissible set")]
    SolvedPolicyOutsideOmega,

    #[error("updated policy is inadmissible")]
    StepInadmissible {
        from: Box<GaussianPolicy>,
        to: Box<GaussianPolicy>,
    },

    #[error("step sizes violate contraction preconditions (phi = {phi})")]
    ContractionPrecondition { phi: f64 },

    #[error("smoothing radius exceeds admissibility margin ({attempts} consecutive rejected draws)")]
    RadiusExceedsMargin { attempts: usize },

    #[error("run aborted at iteration {}: {source}", last.iter)]
    RunAborted {
        last: Box<RunRecord>,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Short name of the failing operation, used by the CLI when reporting.
    pub fn operation(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) | Error::DimensionMismatch { .. } => "validate",
            Error::DegenerateCovariance => "log_pdf",
            Error::InadmissibleGain { .. } => "p_k",
            Error::TrajectoryDiverged { .. } => "sample_rollout",
            Error::AreFailed { .. } | Error::SolvedPolicyOutsideOmega => "solve_are",
            Error::StepInadmissible { .. } => "policy_step",
            Error::ContractionPrecondition { .. } => "contraction_phi",
            Error::RadiusExceedsMargin { .. } => "estimate_gradient",
            Error::RunAborted { source, .. } => source.operation(),
            Error::InvalidConfig(_) => "config",
        }
    }
}
