//! Multi-agent trust-region training: rollouts, advantages, sequential
//! policy updates, evaluation and the deviation probe.

mod config;
mod metrics;
mod networks;
mod probe;
mod rollout;
mod train;
mod update;

pub use config::{PenaltyMode, TrainerConfig, Variant};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter};
pub use networks::{Actor, Critic, CriticBatch, CriticInput, ValueNormalizer};
pub use probe::{ne_deviation_probe, DeviationGame, MatrixGame, ProbeReport};
pub use rollout::{collect_rollouts, estimate_advantages, normalize_advantages, observe_all, RolloutBatch};
pub use train::{AgentState, EvalReport, IterationReport, Trainer};
pub use update::{
    clipped_step, critic_regression, evaluate_candidate, log_probs, natural_gradient_step, surrogate_at_origin,
    trust_region_step, PolicyData, StepReport,
};

use crate::autodiff::AutodiffError;
use crate::dist::DistError;
use crate::env::EnvError;
use crate::graph::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
