use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::action::HybridAction;
use super::allocation::{allocate_resources, AllocationResult};
use super::channel::{link_rate_bps, path_loss_db};
use super::config::ScenarioConfig;
use super::pairing::{resolve_pairing, PairingAssignment, PairingIntent};
use super::reward::{agent_reward, fairness_penalty};
use super::EnvError;

#[derive(Clone, Debug, PartialEq)]
pub struct UavState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundUserState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// Complete world snapshot, including the RNG driving GU motion and the
/// per-step UAV ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub uavs: Vec<UavState>,
    pub gus: Vec<GroundUserState>,
    pub pairing: PairingAssignment,
    pub t: usize,
    pub rng: ChaCha8Rng,
}

impl EnvState {
    pub fn uav_positions(&self) -> Vec<[f64; 3]> {
        self.uavs.iter().map(|u| u.position).collect()
    }

    pub fn gu_positions(&self) -> Vec<[f64; 3]> {
        self.gus.iter().map(|g| g.position).collect()
    }

    pub fn is_terminal(&self, cfg: &ScenarioConfig) -> bool {
        self.t >= cfg.t_max
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// `M x N`, bit/s.
    pub rates_bps: Vec<Vec<f64>>,
    pub fairness_eps: Vec<f64>,
    pub rewards: Vec<f64>,
    pub allocation: AllocationResult,
    pub uav_order: Vec<usize>,
    pub next_state: EnvState,
    pub done: bool,
}

/// Fresh episode: UAVs uniform in the flight box, GUs uniform on the ground
/// square, everything at rest.
pub fn reset(cfg: &ScenarioConfig, seed: u64) -> Result<EnvState, EnvError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = cfg.area_half_extent;
    let [zmin, zmax] = cfg.altitude_range;
    let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let uavs: Vec<UavState> = (0..cfg.num_uavs)
        .map(|_| UavState {
            position: [uniform(-a, a), uniform(-a, a), uniform(zmin, zmax)],
            velocity: [0.0; 3],
        })
        .collect();
    let gus: Vec<GroundUserState> = (0..cfg.num_gus)
        .map(|_| GroundUserState {
            position: [uniform(-a, a), uniform(-a, a), 0.0],
            velocity: [0.0; 3],
        })
        .collect();
    let uav_pos: Vec<[f64; 3]> = uavs.iter().map(|u| u.position).collect();
    let gu_pos: Vec<[f64; 3]> = gus.iter().map(|g| g.position).collect();
    let idle: Vec<PairingIntent> = (0..cfg.num_uavs)
        .map(|_| PairingIntent::from_logits(vec![0.0; cfg.num_gus]))
        .collect();
    let order: Vec<usize> = (0..cfg.num_uavs).collect();
    let pairing = resolve_pairing(&idle, &order, &uav_pos, &gu_pos)?;
    Ok(EnvState {
        uavs,
        gus,
        pairing,
        t: 0,
        rng,
    })
}

fn clamp_speed(v: [f64; 3], max: f64) -> [f64; 3] {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if norm > max && norm > 0.0 {
        let k = max / norm;
        [v[0] * k, v[1] * k, v[2] * k]
    } else {
        v
    }
}

/// One decision slot: pairing, motion, allocation, rates and rewards.
pub fn step(state: &EnvState, actions: &[HybridAction], cfg: &ScenarioConfig) -> Result<StepOutcome, EnvError> {
    if state.is_terminal(cfg) {
        return Err(EnvError::Usage("step called on a terminal state".into()));
    }
    if actions.len() != cfg.num_uavs {
        return Err(EnvError::Usage(format!(
            "expected {} actions, got {}",
            cfg.num_uavs,
            actions.len()
        )));
    }
    let mut next = state.clone();
    let mut order: Vec<usize> = (0..cfg.num_uavs).collect();
    order.shuffle(&mut next.rng);

    let intents: Vec<PairingIntent> = actions.iter().map(|a| a.pairing.clone()).collect();
    let pairing = resolve_pairing(&intents, &order, &state.uav_positions(), &state.gu_positions())?;

    let a = cfg.area_half_extent;
    let [zmin, zmax] = cfg.altitude_range;
    let dt = cfg.dt_decision;
    for (uav, action) in next.uavs.iter_mut().zip(actions) {
        if action.velocity_cmd.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::Usage("non-finite velocity command".into()));
        }
        let v = clamp_speed(action.velocity_cmd, cfg.uav_max_speed);
        uav.velocity = v;
        uav.position = [
            (uav.position[0] + v[0] * dt).clamp(-a, a),
            (uav.position[1] + v[1] * dt).clamp(-a, a),
            (uav.position[2] + v[2] * dt).clamp(zmin, zmax),
        ];
    }
    for gu in next.gus.iter_mut() {
        let heading = next.rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = if cfg.gu_max_speed > 0.0 {
            next.rng.gen_range(0.0..=cfg.gu_max_speed)
        } else {
            0.0
        };
        let v = [speed * heading.cos(), speed * heading.sin(), 0.0];
        gu.velocity = v;
        gu.position = [
            (gu.position[0] + v[0] * dt).clamp(-a, a),
            (gu.position[1] + v[1] * dt).clamp(-a, a),
            0.0,
        ];
    }

    let uav_pos = next.uav_positions();
    let gu_pos = next.gu_positions();
    let allocation = allocate_resources(actions, &pairing, &uav_pos, &gu_pos, cfg)?;
    let mut rates_bps = vec![vec![0.0; cfg.num_gus]; cfg.num_uavs];
    let mut fairness_eps = Vec::with_capacity(cfg.num_uavs);
    let mut rewards = Vec::with_capacity(cfg.num_uavs);
    for m in 0..cfg.num_uavs {
        for n in 0..cfg.num_gus {
            if pairing.is_paired(m, n) {
                let pl = path_loss_db(uav_pos[m], gu_pos[n], cfg)?;
                rates_bps[m][n] = link_rate_bps(
                    allocation.power_w[m][n],
                    allocation.bandwidth_hz[m][n],
                    pl,
                    true,
                    cfg,
                )?;
            }
        }
        fairness_eps.push(fairness_penalty(&rates_bps[m], pairing.row(m))?);
        rewards.push(agent_reward(&rates_bps[m], pairing.row(m), cfg.lambda_fair)?);
    }

    next.pairing = pairing;
    next.t += 1;
    let done = next.t == cfg.t_max;
    Ok(StepOutcome {
        rates_bps,
        fairness_eps,
        rewards,
        allocation,
        uav_order: order,
        next_state: next,
        done,
    })
}

pub fn observation_dim(cfg: &ScenarioConfig) -> usize {
    let (m, n) = (cfg.num_uavs, cfg.num_gus);
    3 + 3 * m + 2 * n + m * n + 1
}

/// Fixed-length observation for `agent`: own position, all UAV positions,
/// all GU ground positions, the flattened pairing matrix and normalized
/// time. Horizontal coordinates are divided by the area half-extent and
/// altitudes by the ceiling.
pub fn build_observation(state: &EnvState, agent: usize, cfg: &ScenarioConfig) -> Result<Vec<f64>, EnvError> {
    if agent >= state.uavs.len() {
        return Err(EnvError::Usage(format!("no UAV with index {agent}")));
    }
    let a = cfg.area_half_extent;
    let zmax = cfg.altitude_max();
    let scale = |p: [f64; 3]| [p[0] / a, p[1] / a, p[2] / zmax];
    let mut obs = Vec::with_capacity(observation_dim(cfg));
    obs.extend(scale(state.uavs[agent].position));
    for u in &state.uavs {
        obs.extend(scale(u.position));
    }
    for g in &state.gus {
        obs.push(g.position[0] / a);
        obs.push(g.position[1] / a);
    }
    obs.extend(state.pairing.flattened());
    obs.push(state.t as f64 / cfg.t_max as f64);
    Ok(obs)
}
