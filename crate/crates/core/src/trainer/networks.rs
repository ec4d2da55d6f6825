use rand::Rng;

use super::config::{TrainerConfig, Variant};
use super::TrainerError;
use crate::autodiff::nn::{linear, Mlp};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::dist::{HeadLayout, HybridDistribution};
use crate::graph::{AttentionHead, GraphBatch, GrnEncoder};

/// Per-UAV policy: an MLP trunk producing all action heads plus a
/// state-independent velocity log-std.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub mlp: Mlp,
    pub layout: HeadLayout,
    pub params: ParamSet,
}

pub const LOG_STD: &str = "actor.log_std";

impl Actor {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, obs_dim: usize, num_gus: usize, cfg: &TrainerConfig) -> Self {
        let layout = HeadLayout { num_gus };
        let mlp = Mlp::new("actor", vec![obs_dim, cfg.hidden, cfg.hidden, layout.width()]);
        let mut params = ParamSet::new();
        mlp.init(rng, &mut params);
        mlp.scale_output(&mut params, 0.01);
        params.insert(LOG_STD, Tensor::filled(&[1, 3], cfg.init_log_std));
        Self { mlp, layout, params }
    }

    /// Head rows and the log-std handle for observations `obs` (`B x obs_dim`).
    pub fn forward(&self, tape: &mut Tape, b: &Bound, obs: Var) -> Result<(Var, Var), TrainerError> {
        Ok((self.mlp.forward(tape, b, obs)?, b[LOG_STD]))
    }

    pub fn log_std(&self) -> [f64; 3] {
        let d = self.params.get(LOG_STD).expect("log_std present").data();
        [d[0], d[1], d[2]]
    }

    /// Head rows for a batch of observations, without recording gradients.
    pub fn heads(&self, obs: &Tensor) -> Result<Tensor, TrainerError> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let x = tape.constant(obs.clone());
        let (h, _) = self.forward(&mut tape, &b, x)?;
        Ok(tape.value(h).clone())
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<HybridDistribution, TrainerError> {
        let heads = self.heads(&Tensor::row(obs))?;
        Ok(HybridDistribution::from_head(heads.row_slice(0), self.log_std())?)
    }
}

/// Which extra pathways feed the critic besides the agent's observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CriticInput {
    pub graph: bool,
    pub attention: bool,
}

impl From<Variant> for CriticInput {
    fn from(v: Variant) -> Self {
        Self {
            graph: v.uses_graph(),
            attention: v.uses_attention(),
        }
    }
}

/// Critic inputs for `B` samples: every agent's observations and, when
/// the graph pathway is on, the batched topologies.
pub struct CriticBatch {
    pub observations: Vec<Tensor>,
    pub graphs: Option<GraphBatch>,
}

impl CriticBatch {
    pub fn len(&self) -> usize {
        self.observations.first().map_or(0, Tensor::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// State-value network of one agent, predicting normalized returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub agent: usize,
    pub num_agents: usize,
    pub input: CriticInput,
    pub mlp: Mlp,
    pub grn: Option<GrnEncoder>,
    pub attention: Option<AttentionHead>,
    pub params: ParamSet,
}

const EMBED: &str = "critic.embed";

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        agent: usize,
        num_agents: usize,
        obs_dim: usize,
        input: CriticInput,
        cfg: &TrainerConfig,
    ) -> Self {
        let mut params = ParamSet::new();
        let mut width = obs_dim;
        let grn = input.graph.then(|| GrnEncoder::new("critic.grn", cfg.embed_dim, cfg.grn_rounds));
        if let Some(g) = &grn {
            g.init(rng, &mut params);
            width += cfg.embed_dim;
        }
        let attention = input.attention.then(|| AttentionHead::new("critic.att", cfg.embed_dim, cfg.key_dim));
        if let Some(a) = &attention {
            if grn.is_none() {
                params.add_linear(rng, EMBED, obs_dim, cfg.embed_dim);
            }
            a.init(rng, &mut params);
            width += cfg.key_dim;
        }
        let mlp = Mlp::new("critic.v", vec![width, cfg.hidden, cfg.hidden, 1]);
        mlp.init(rng, &mut params);
        Self {
            agent,
            num_agents,
            input,
            mlp,
            grn,
            attention,
            params,
        }
    }

    /// Normalized values, `B x 1`.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, batch: &CriticBatch) -> Result<Var, TrainerError> {
        let bs = batch.len();
        let obs: Vec<Var> = batch.observations.iter().map(|o| tape.constant(o.clone())).collect();
        let mut parts = vec![obs[self.agent]];
        let mut tokens = None;
        if let Some(grn) = &self.grn {
            let graphs = batch
                .graphs
                .as_ref()
                .ok_or_else(|| TrainerError::Config("graph critic needs topologies".into()))?;
            let emb = grn.forward(tape, b, graphs)?;
            let per_agent: Vec<Var> = (0..self.num_agents)
                .map(|m| tape.slice_rows(emb, m * bs, (m + 1) * bs))
                .collect::<Result<_, _>>()?;
            parts.push(per_agent[self.agent]);
            tokens = Some(per_agent);
        }
        if let Some(att) = &self.attention {
            let tokens = match tokens {
                Some(t) => t,
                None => obs
                    .iter()
                    .map(|&o| {
                        let z = linear(tape, b, EMBED, o)?;
                        Ok(tape.tanh(z))
                    })
                    .collect::<Result<Vec<Var>, TrainerError>>()?,
            };
            parts.push(att.forward(tape, b, tokens[self.agent], &tokens)?);
        }
        let x = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts)? };
        Ok(self.mlp.forward(tape, b, x)?)
    }

    pub fn predict(&self, batch: &CriticBatch) -> Result<Vec<f64>, TrainerError> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let v = self.forward(&mut tape, &b, batch)?;
        Ok(tape.value(v).data().to_vec())
    }
}

/// Running mean and variance of value targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNormalizer {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for ValueNormalizer {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 0.0,
        }
    }
}

impl ValueNormalizer {
    pub fn std(&self) -> f64 {
        self.var.sqrt().max(1e-6)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.std() + self.mean
    }

    /// Merges a batch using the parallel-variance formula.
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if self.count == 0.0 {
            self.mean = mean;
            self.var = var;
            self.count = n;
            return;
        }
        let total = self.count + n;
        let delta = mean - self.mean;
        self.var = (self.count * self.var + n * var + delta * delta * self.count * n / total) / total;
        self.mean += delta * n / total;
        self.count = total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizer_merges_like_one_pass() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 10.0 + 3.0).collect();
        let mut a = ValueNormalizer::default();
        a.update(&xs[..20]);
        a.update(&xs[20..]);
        let mut b = ValueNormalizer::default();
        b.update(&xs);
        assert_relative_eq!(a.mean, b.mean, max_relative = 1e-12);
        assert_relative_eq!(a.var, b.var, max_relative = 1e-12);
        assert_relative_eq!(a.denormalize(a.normalize(7.5)), 7.5, max_relative = 1e-12);
    }

    #[test]
    fn actor_heads_start_near_uniform() {
        let cfg = TrainerConfig::default();
        let actor = Actor::new(&mut ChaCha8Rng::seed_from_u64(0), 10, 4, &cfg);
        let d = actor.distribution(&[0.5; 10]).unwrap();
        assert!(d.pairing_probs.iter().all(|p| (p - 0.5).abs() < 0.05));
        assert_eq!(d.velocity_log_std, [-0.5; 3]);
    }

    #[test]
    fn critic_variants_have_expected_pathways() {
        let cfg = TrainerConfig::default();
        for v in Variant::ALL {
            let c = Critic::new(&mut ChaCha8Rng::seed_from_u64(1), 0, 2, 10, v.into(), &cfg);
            assert_eq!(c.grn.is_some(), v.uses_graph());
            assert_eq!(c.attention.is_some(), v.uses_attention());
            let has_embed = c.params.get("critic.embed.w").is_some();
            assert_eq!(has_embed, v == Variant::AttnMatr);
        }
    }
}
