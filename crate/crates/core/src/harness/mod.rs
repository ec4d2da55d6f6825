//! Experiment driver: resolved run snapshots, artifact layout, plots and
//! result tables.

mod experiment;
mod gradients;
mod plot;
mod summary;

pub use experiment::{
    load_snapshot, probe_all, run_experiment, run_single, write_probes, ExperimentSpec, RunArtifacts, RunOptions,
    RunSnapshot,
};
pub use gradients::{gradient_suite, ComponentCheck};
pub use plot::{
    emit_reward_plot, emit_trajectory_plot, moving_average, reward_plot_svg, run_label, trajectory_plot_svg,
    RewardSeries,
};
pub use summary::{median, summarize_final_rewards, write_summary, SummaryTable};

use crate::autodiff::AutodiffError;
use crate::env::EnvError;
use crate::trainer::TrainerError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("config write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
