use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::autodiff::AdamConfig;

/// Training algorithm and critic pathway.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Sequential trust-region updates, critic reads GRN embeddings and
    /// attention over all agents' embeddings.
    GaMatr,
    /// Sequential trust-region updates with a raw-observation critic.
    Matr,
    /// Independent clipped-ratio updates.
    Ippo,
    /// Sequential natural-gradient trust-region updates.
    Hatrpo,
    /// Like `GaMatr` without the attention pathway.
    GraphMatr,
    /// Like `GaMatr` without the graph encoder.
    AttnMatr,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Self::GaMatr,
        Self::Matr,
        Self::Ippo,
        Self::Hatrpo,
        Self::GraphMatr,
        Self::AttnMatr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GaMatr => "ga-matr",
            Self::Matr => "matr",
            Self::Ippo => "ippo",
            Self::Hatrpo => "hatrpo",
            Self::GraphMatr => "graph-matr",
            Self::AttnMatr => "attn-matr",
        }
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, Self::GaMatr | Self::GraphMatr)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Self::GaMatr | Self::AttnMatr)
    }

    /// Whether agents see their predecessors' updated ratios.
    pub fn is_sequential(self) -> bool {
        !matches!(self, Self::Ippo)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = TrainerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| TrainerError::Config(format!("unknown variant `{s}`")))
    }
}

/// How the KL penalty coefficient is chosen for penalized ascent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// `penalty_coef` as given.
    Fixed,
    /// `4 * gamma * max|A| / (1 - gamma)^2` from the batch advantages.
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Bound on the measured mean KL of an accepted step.
    pub kl_limit: f64,
    pub penalty: PenaltyMode,
    pub penalty_coef: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    /// Passes over the batch when fitting the critic.
    pub critic_epochs: usize,
    pub minibatches: usize,
    pub backtrack_factor: f64,
    pub backtrack_tries: usize,
    pub clip_eps: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub grn_rounds: usize,
    pub init_log_std: f64,
    /// Samples whose compound log-ratio exceeds this are dropped.
    pub ratio_log_limit: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub eval_seeds: Vec<u64>,
    pub checkpoint_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GaMatr,
            iterations: 200,
            episodes_per_iteration: 2,
            kl_limit: 0.01,
            penalty: PenaltyMode::Fixed,
            penalty_coef: 1.0,
            gae_lambda: 0.95,
            epochs: 5,
            critic_epochs: 3,
            minibatches: 4,
            backtrack_factor: 0.5,
            backtrack_tries: 10,
            clip_eps: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            hidden: 64,
            embed_dim: 32,
            key_dim: 32,
            grn_rounds: 2,
            init_log_std: -0.5,
            ratio_log_limit: 20.0,
            cg_iters: 10,
            cg_damping: 0.1,
            eval_seeds: vec![1_000_003, 1_000_033],
            checkpoint_every: 50,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let fail = |m: &str| Err(TrainerError::Config(m.into()));
        if !(self.kl_limit > 0.0) {
            return fail("kl_limit must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return fail("backtrack_factor must lie in (0, 1)");
        }
        if self.epochs == 0 || self.critic_epochs == 0 || self.minibatches == 0 || self.episodes_per_iteration == 0 {
            return fail("epochs, critic_epochs, minibatches and episodes_per_iteration must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.key_dim == 0 || self.grn_rounds == 0 {
            return fail("network sizes and grn_rounds must be positive");
        }
        if self.eval_seeds.is_empty() {
            return fail("eval_seeds must not be empty");
        }
        if self.penalty_coef < 0.0 || self.clip_eps <= 0.0 || self.actor_lr < 0.0 || self.critic_lr < 0.0 {
            return fail("penalty_coef, clip_eps and learning rates must be nonnegative");
        }
        Ok(())
    }

    pub fn actor_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.actor_lr,
            ..AdamConfig::default()
        }
    }

    pub fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.critic_lr,
            ..AdamConfig::default()
        }
    }
}
