use rand::Rng;

use super::networks::{Actor, CriticBatch};
use super::TrainerError;
use crate::autodiff::Tensor;
use crate::dist::ActionSample;
use crate::env::{build_observation, reset, step, EnvState, HybridAction, ScenarioConfig};
use crate::graph::{encode_topology, GraphBatch, GraphTopology};

/// Transitions of every agent over one or more complete episodes.
#[derive(Clone, Debug, Default)]
pub struct RolloutBatch {
    pub num_agents: usize,
    /// `[agent][t]`
    pub observations: Vec<Vec<Vec<f64>>>,
    /// `[t]`, topology of the state the actions were taken in.
    pub graphs: Vec<GraphTopology>,
    pub actions: Vec<Vec<ActionSample>>,
    pub behavior_log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    /// `[t]`, true on the last step of each episode.
    pub dones: Vec<bool>,
    pub values: Vec<Vec<f64>>,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.dones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dones.is_empty()
    }

    /// Critic inputs for the samples `idx`.
    pub fn critic_batch(&self, idx: &[usize], with_graphs: bool) -> Result<CriticBatch, TrainerError> {
        let observations = self
            .observations
            .iter()
            .map(|per_t| {
                let rows: Vec<Vec<f64>> = idx.iter().map(|&t| per_t[t].clone()).collect();
                Tensor::from_rows(&rows)
            })
            .collect::<Result<_, _>>()?;
        let graphs = if with_graphs {
            let g: Vec<GraphTopology> = idx.iter().map(|&t| self.graphs[t].clone()).collect();
            Some(GraphBatch::new(&g)?)
        } else {
            None
        };
        Ok(CriticBatch { observations, graphs })
    }

    pub fn observation_tensor(&self, agent: usize, idx: &[usize]) -> Result<Tensor, TrainerError> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&t| self.observations[agent][t].clone()).collect();
        Ok(Tensor::from_rows(&rows)?)
    }
}

fn finite(values: &[f64], what: &str, t: usize) -> Result<(), TrainerError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TrainerError::NonFinite(format!("{what} at step {t}")))
    }
}

/// Observations of every agent for `state`.
pub fn observe_all(state: &EnvState, cfg: &ScenarioConfig) -> Result<Vec<Vec<f64>>, TrainerError> {
    (0..cfg.num_uavs)
        .map(|m| Ok(build_observation(state, m, cfg)?))
        .collect()
}

/// Runs one full episode per seed with sampled actions. Values,
/// advantages and returns are left empty for the caller to fill.
pub fn collect_rollouts<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    actors: &[Actor],
    env_seeds: &[u64],
    rng: &mut R,
) -> Result<RolloutBatch, TrainerError> {
    let m = cfg.num_uavs;
    if actors.len() != m {
        return Err(TrainerError::Config(format!("{} actors for {m} UAVs", actors.len())));
    }
    let mut batch = RolloutBatch {
        num_agents: m,
        observations: vec![Vec::new(); m],
        actions: vec![Vec::new(); m],
        behavior_log_probs: vec![Vec::new(); m],
        rewards: vec![Vec::new(); m],
        ..Default::default()
    };
    for &seed in env_seeds {
        let mut state = reset(cfg, seed)?;
        loop {
            let t = batch.len();
            let obs = observe_all(&state, cfg)?;
            let mut env_actions: Vec<HybridAction> = Vec::with_capacity(m);
            for (agent, actor) in actors.iter().enumerate() {
                finite(&obs[agent], "observation", t)?;
                let dist = actor.distribution(&obs[agent])?;
                let a = dist.sample(rng);
                batch.behavior_log_probs[agent].push(dist.log_prob(&a)?);
                env_actions.push(dist.to_env_action(&a, cfg.uav_max_speed));
                batch.actions[agent].push(a);
            }
            batch.graphs.push(encode_topology(&state, &state.pairing, cfg));
            let out = step(&state, &env_actions, cfg)?;
            finite(&out.rewards, "reward", t)?;
            for (agent, o) in obs.into_iter().enumerate() {
                batch.observations[agent].push(o);
                batch.rewards[agent].push(out.rewards[agent]);
            }
            batch.dones.push(out.done);
            state = out.next_state;
            if out.done {
                break;
            }
        }
    }
    Ok(batch)
}

/// Generalized advantage estimation; returns `(advantages, returns)`.
/// Values after a terminal step count as zero.
pub fn estimate_advantages(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] || t + 1 == n {
            (0.0, 0.0)
        } else {
            (values[t + 1], running)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit population variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = if std > 1e-12 { (*a - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::TrainerConfig;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn telescoping_gae() {
        let (adv, ret) = estimate_advantages(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 1.0, 1.0);
        assert_eq!(adv, vec![2.0, 1.0]);
        assert_eq!(ret, vec![2.0, 1.0]);
    }

    #[test]
    fn zero_lambda_is_td_error() {
        let r = [0.5, -1.0, 2.0, 0.3];
        let v = [0.1, 0.4, -0.2, 0.7];
        let d = [false, true, false, true];
        let (adv, _) = estimate_advantages(&r, &v, &d, 0.9, 0.0);
        let expect = [0.5 + 0.9 * 0.4 - 0.1, -1.0 - 0.4, 2.0 + 0.9 * 0.7 + 0.2, 0.3 - 0.7];
        for (a, e) in adv.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization_contract() {
        let mut a: Vec<f64> = (0..97).map(|i| ((i * 7919) % 101) as f64 * 0.3 - 4.0).collect();
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
        let mut flat = vec![3.0; 5];
        normalize_advantages(&mut flat);
        assert_eq!(flat, vec![0.0; 5]);
    }

    #[test]
    fn rollout_length_determinism_and_passthrough() {
        let cfg = ScenarioConfig {
            t_max: 12,
            ..ScenarioConfig::preset("2x4").unwrap()
        };
        let tc = TrainerConfig::default();
        let obs_dim = crate::env::observation_dim(&cfg);
        let mut init = ChaCha8Rng::seed_from_u64(0);
        let actors: Vec<Actor> = (0..2).map(|_| Actor::new(&mut init, obs_dim, 4, &tc)).collect();
        let run = || collect_rollouts(&cfg, &actors, &[5], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.len(), 12);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.behavior_log_probs, b.behavior_log_probs);
        assert_eq!(a.dones.iter().filter(|&&d| d).count(), 1);

        // Replaying the recorded actions reproduces the rewards.
        let mut state = reset(&cfg, 5).unwrap();
        for t in 0..12 {
            let acts: Vec<HybridAction> = (0..2)
                .map(|m| {
                    let d = actors[m].distribution(&a.observations[m][t]).unwrap();
                    d.to_env_action(&a.actions[m][t], cfg.uav_max_speed)
                })
                .collect();
            let out = step(&state, &acts, &cfg).unwrap();
            assert_eq!(out.rewards, vec![a.rewards[0][t], a.rewards[1][t]]);
            state = out.next_state;
        }
    }
}
