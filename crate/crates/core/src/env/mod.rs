//! Multi-UAV downlink simulator: kinematics, pairing, channel, allocation,
//! fairness and reward.

mod action;
mod allocation;
mod channel;
mod config;
mod pairing;
mod reward;
mod state;
mod trace;

pub use action::{AllocationScheme, HybridAction};
pub use allocation::{allocate_for_uav, allocate_resources, apply_floor, scheme_shares, AllocationResult};
pub use channel::{dbm_to_w, distance, free_space_loss_db, link_rate_bps, path_loss_db, w_to_dbm, SPEED_OF_LIGHT};
pub use config::{ScenarioConfig, PRESETS};
pub use pairing::{resolve_pairing, PairingAssignment, PairingIntent};
pub use reward::{agent_reward, fairness_penalty};
pub use state::{build_observation, observation_dim, reset, step, EnvState, GroundUserState, StepOutcome, UavState};
pub use trace::{read_trace, TraceRecord, TraceWriter};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("trace format: {0}")]
    Trace(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
