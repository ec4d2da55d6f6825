use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TrainerConfig, Variant};
use super::metrics::MetricsRecord;
use super::networks::{Actor, Critic, ValueNormalizer};
use super::rollout::{collect_rollouts, estimate_advantages, normalize_advantages, observe_all, RolloutBatch};
use super::update::{clipped_step, critic_regression, natural_gradient_step, trust_region_step, PolicyData, StepReport};
use super::TrainerError;
use crate::autodiff::{Adam, ParamSet, Tensor};
use crate::env::{observation_dim, reset, step, HybridAction, ScenarioConfig, TraceRecord};

/// Independent RNG streams derived from the run seed, so that actors and
/// environments are identical across variants until the first update.
mod streams {
    pub const ACTOR_INIT: u64 = 0;
    pub const CRITIC_INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const SCHEDULE: u64 = 4;
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub actor: Actor,
    pub critic: Critic,
    pub critic_adam: Adam,
    pub normalizer: ValueNormalizer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Per agent, mean over evaluation seeds of the episode return.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub records: Vec<MetricsRecord>,
    /// Update order used this iteration.
    pub order: Vec<usize>,
    /// Step reports indexed by agent.
    pub steps: Vec<StepReport>,
    /// Surrogate of each agent's pre-update policy with the predecessor
    /// weights it saw.
    pub surrogate_at_origin: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub scenario: ScenarioConfig,
    pub config: TrainerConfig,
    pub seed: u64,
    pub agents: Vec<AgentState>,
    pub iteration: usize,
    env_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    schedule_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(scenario: ScenarioConfig, config: TrainerConfig, seed: u64) -> Result<Self, TrainerError> {
        scenario.validate()?;
        config.validate()?;
        let m = scenario.num_uavs;
        let obs_dim = observation_dim(&scenario);
        let mut actor_rng = stream(seed, streams::ACTOR_INIT);
        let mut critic_rng = stream(seed, streams::CRITIC_INIT);
        let agents = (0..m)
            .map(|i| AgentState {
                actor: Actor::new(&mut actor_rng, obs_dim, scenario.num_gus, &config),
                critic: Critic::new(&mut critic_rng, i, m, obs_dim, config.variant.into(), &config),
                critic_adam: Adam::new(config.critic_adam()),
                normalizer: ValueNormalizer::default(),
            })
            .collect();
        Ok(Self {
            scenario,
            config,
            seed,
            agents,
            iteration: 0,
            env_rng: stream(seed, streams::ENV),
            sample_rng: stream(seed, streams::SAMPLING),
            schedule_rng: stream(seed, streams::SCHEDULE),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn actors(&self) -> Vec<Actor> {
        self.agents.iter().map(|a| a.actor.clone()).collect()
    }

    /// Samples fresh episodes and fills values, normalized advantages and
    /// returns for every agent.
    pub fn rollout(&mut self) -> Result<RolloutBatch, TrainerError> {
        let seeds: Vec<u64> = (0..self.config.episodes_per_iteration).map(|_| self.env_rng.gen()).collect();
        let actors = self.actors();
        let mut batch = collect_rollouts(&self.scenario, &actors, &seeds, &mut self.sample_rng)?;
        let all: Vec<usize> = (0..batch.len()).collect();
        let inputs = batch.critic_batch(&all, self.variant().uses_graph())?;
        for agent in &self.agents {
            let values: Vec<f64> = agent
                .critic
                .predict(&inputs)?
                .into_iter()
                .map(|v| agent.normalizer.denormalize(v))
                .collect();
            let (mut adv, ret) = estimate_advantages(
                &batch.rewards[agent.critic.agent],
                &values,
                &batch.dones,
                self.scenario.gamma,
                self.config.gae_lambda,
            );
            if !adv.iter().all(|a| a.is_finite()) {
                return Err(TrainerError::NonFinite("advantage".into()));
            }
            normalize_advantages(&mut adv);
            batch.values.push(values);
            batch.advantages.push(adv);
            batch.returns.push(ret);
        }
        Ok(batch)
    }

    /// Fits agent `i`'s critic and takes one policy step weighted by
    /// `predecessor`.
    pub fn update_agent(&mut self, i: usize, batch: &RolloutBatch, predecessor: Vec<f64>) -> Result<(StepReport, f64), TrainerError> {
        let cfg = self.config.clone();
        let with_graphs = self.variant().uses_graph();
        let agent = &mut self.agents[i];
        agent.normalizer.update(&batch.returns[i]);
        let targets: Vec<f64> = batch.returns[i].iter().map(|&r| agent.normalizer.normalize(r)).collect();
        critic_regression(
            &mut agent.critic,
            &mut agent.critic_adam,
            batch,
            &targets,
            &cfg,
            with_graphs,
            &mut self.schedule_rng,
        )?;

        let all: Vec<usize> = (0..batch.len()).collect();
        let data = PolicyData::new(
            &agent.actor,
            batch.observation_tensor(i, &all)?,
            batch.actions[i].clone(),
            batch.advantages[i].clone(),
            predecessor,
            cfg.ratio_log_limit,
        )?;
        let origin = super::update::surrogate_at_origin(&agent.actor, &data, cfg.ratio_log_limit)?;
        let report = match cfg.variant {
            Variant::Ippo => clipped_step(&mut agent.actor, &data, &cfg, &mut self.schedule_rng)?,
            Variant::Hatrpo => natural_gradient_step(&mut agent.actor, &data, &cfg)?,
            _ => trust_region_step(&mut agent.actor, &data, &cfg, self.scenario.gamma, &mut self.schedule_rng)?,
        };
        Ok((report, origin))
    }

    /// One round: collect, estimate advantages, update every agent once
    /// (sequentially in a fresh random order unless independent), evaluate.
    pub fn train_iteration(&mut self) -> Result<IterationReport, TrainerError> {
        let batch = self.rollout()?;
        let m = self.num_agents();
        let mut order: Vec<usize> = (0..m).collect();
        if self.variant().is_sequential() {
            order.shuffle(&mut self.schedule_rng);
        }
        let mut predecessor = vec![1.0; batch.len()];
        let mut steps: Vec<Option<StepReport>> = vec![None; m];
        let mut origins = vec![0.0; m];
        for &i in &order {
            let weights = if self.variant().is_sequential() {
                predecessor.clone()
            } else {
                vec![1.0; batch.len()]
            };
            let (report, origin) = self.update_agent(i, &batch, weights)?;
            if self.variant().is_sequential() {
                for (p, r) in predecessor.iter_mut().zip(&report.ratios) {
                    *p *= r;
                }
            }
            origins[i] = origin;
            steps[i] = Some(report);
        }
        let steps: Vec<StepReport> = steps.into_iter().map(|s| s.expect("every agent updated")).collect();
        let eval = self.evaluate()?;
        let records = (0..m)
            .map(|i| MetricsRecord {
                iteration: self.iteration,
                agent: i,
                mean_episode_reward: eval.mean[i],
                kl: steps[i].kl,
                surrogate_gain: steps[i].surrogate_gain,
                accepted: steps[i].accepted,
            })
            .collect();
        self.iteration += 1;
        Ok(IterationReport {
            records,
            order,
            steps,
            surrogate_at_origin: origins,
        })
    }

    /// Greedy episodes on the fixed evaluation seeds. Never touches
    /// parameters or training RNG streams.
    pub fn evaluate(&self) -> Result<EvalReport, TrainerError> {
        let m = self.num_agents();
        let seeds = &self.config.eval_seeds;
        let mut returns = vec![Vec::with_capacity(seeds.len()); m];
        for &seed in seeds {
            let (total, _) = self.greedy_episode(seed, false)?;
            for (i, t) in total.into_iter().enumerate() {
                returns[i].push(t);
            }
        }
        let n = seeds.len() as f64;
        let mean: Vec<f64> = returns.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let std = returns
            .iter()
            .zip(&mean)
            .map(|(r, mu)| (r.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(EvalReport { mean, std })
    }

    /// One episode with every agent playing its distribution mode. Returns
    /// per-agent returns and, if requested, the trace starting at `t = 0`.
    pub fn greedy_episode(&self, seed: u64, record: bool) -> Result<(Vec<f64>, Vec<TraceRecord>), TrainerError> {
        let m = self.num_agents();
        let mut state = reset(&self.scenario, seed)?;
        let mut trace = Vec::new();
        if record {
            trace.push(TraceRecord::from_state(&state, vec![0.0; m]));
        }
        let mut total = vec![0.0; m];
        loop {
            let obs = observe_all(&state, &self.scenario)?;
            let actions: Vec<HybridAction> = self
                .agents
                .iter()
                .zip(&obs)
                .map(|(a, o)| {
                    let d = a.actor.distribution(o)?;
                    Ok(d.to_env_action(&d.mode(), self.scenario.uav_max_speed))
                })
                .collect::<Result<_, TrainerError>>()?;
            let out = step(&state, &actions, &self.scenario)?;
            for (t, r) in total.iter_mut().zip(&out.rewards) {
                *t += r;
            }
            if record {
                trace.push(TraceRecord::from_outcome(&out));
            }
            let done = out.done;
            state = out.next_state;
            if done {
                return Ok((total, trace));
            }
        }
    }

    /// All agents' actor and critic parameters plus value-normalizer
    /// statistics, names prefixed `agent{i}.`.
    pub fn checkpoint_params(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            for (k, t) in a.actor.params.iter().chain(a.critic.params.iter()) {
                out.insert(format!("agent{i}.{k}"), t.clone());
            }
            let n = &a.normalizer;
            out.insert(format!("agent{i}.value_norm"), Tensor::row(&[n.mean, n.var, n.count]));
        }
        out
    }

    /// Restores parameters written by [`Trainer::checkpoint_params`].
    pub fn restore(&mut self, params: &ParamSet) -> Result<(), TrainerError> {
        for (i, a) in self.agents.iter_mut().enumerate() {
            for set in [&mut a.actor.params, &mut a.critic.params] {
                for (k, t) in set.iter_mut() {
                    let src = params
                        .get(&format!("agent{i}.{k}"))
                        .ok_or_else(|| TrainerError::Config(format!("checkpoint lacks agent{i}.{k}")))?;
                    if src.shape() != t.shape() {
                        return Err(TrainerError::Config(format!("shape mismatch for agent{i}.{k}")));
                    }
                    t.data_mut().copy_from_slice(src.data());
                }
            }
            if let Some(n) = params.get(&format!("agent{i}.value_norm")) {
                let d = n.data();
                a.normalizer = ValueNormalizer {
                    mean: d[0],
                    var: d[1],
                    count: d[2],
                };
            }
        }
        Ok(())
    }

    /// Checksum over every agent's networks except `skip`.
    pub fn checksum_except(&self, skip: Option<usize>) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for (i, a) in self.agents.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            for c in [a.actor.params.checksum(), a.critic.params.checksum()] {
                h = (h ^ c).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: Variant) -> Trainer {
        let scenario = ScenarioConfig {
            t_max: 16,
            ..ScenarioConfig::preset("2x4").unwrap()
        };
        let config = TrainerConfig {
            variant,
            epochs: 2,
            minibatches: 2,
            hidden: 16,
            embed_dim: 8,
            key_dim: 8,
            eval_seeds: vec![77],
            ..Default::default()
        };
        Trainer::new(scenario, config, 3).unwrap()
    }

    #[test]
    fn every_variant_runs_and_reports() {
        for v in Variant::ALL {
            let mut t = tiny(v);
            let rep = t.train_iteration().unwrap();
            assert_eq!(rep.records.len(), 2);
            let mut seen = rep.order.clone();
            seen.sort();
            assert_eq!(seen, vec![0, 1]);
            for s in &rep.steps {
                if s.accepted && v != Variant::Ippo {
                    assert!(s.kl <= t.config.kl_limit);
                    assert!(s.surrogate_gain >= 0.0);
                }
            }
            assert!(rep.surrogate_at_origin[rep.order[0]].abs() < 1e-9);
        }
    }

    #[test]
    fn actors_and_rollouts_identical_across_variants() {
        let mut a = tiny(Variant::GaMatr);
        let mut b = tiny(Variant::Matr);
        for (x, y) in a.agents.iter().zip(&b.agents) {
            assert_eq!(x.actor, y.actor);
        }
        let ra = a.rollout().unwrap();
        let rb = b.rollout().unwrap();
        assert_eq!(ra.rewards, rb.rewards);
        assert_eq!(ra.actions, rb.actions);
    }

    #[test]
    fn evaluation_is_pure_and_repeatable() {
        let t = tiny(Variant::GaMatr);
        let before = t.checksum_except(None);
        let e1 = t.evaluate().unwrap();
        let e2 = t.evaluate().unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.mean.len(), 2);
        assert_eq!(t.checksum_except(None), before);
    }

    #[test]
    fn orders_vary_but_replay() {
        let mut a = tiny(Variant::Matr);
        let mut b = tiny(Variant::Matr);
        let mut orders = vec![];
        for _ in 0..6 {
            let ra = a.train_iteration().unwrap();
            let rb = b.train_iteration().unwrap();
            assert_eq!(ra.order, rb.order);
            assert_eq!(ra.records, rb.records);
            orders.push(ra.order);
        }
        assert!(orders.iter().any(|o| o != &orders[0]));
    }

    #[test]
    fn checkpoint_restore_roundtrip() {
        let mut a = tiny(Variant::GaMatr);
        a.train_iteration().unwrap();
        let snap = a.checkpoint_params();
        let mut b = tiny(Variant::GaMatr);
        b.restore(&snap).unwrap();
        assert_eq!(a.checksum_except(None), b.checksum_except(None));
        assert_eq!(a.evaluate().unwrap(), b.evaluate().unwrap());
    }
}
