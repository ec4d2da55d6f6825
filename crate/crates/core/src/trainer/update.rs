use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{PenaltyMode, TrainerConfig};
use super::networks::{Actor, Critic};
use super::rollout::RolloutBatch;
use super::TrainerError;
use crate::autodiff::{Adam, AutodiffError, ParamGrads, ParamSet, Tape, Tensor, Var};
use crate::dist::{kl_batch, log_prob_batch, ActionBatch, ActionSample};

/// Everything one agent's policy update needs, frozen at the pre-update
/// policy.
#[derive(Clone, Debug)]
pub struct PolicyData {
    pub obs: Tensor,
    pub actions: Vec<ActionSample>,
    pub advantages: Vec<f64>,
    /// Compound updated-vs-old ratio of agents already updated this round.
    pub predecessor: Vec<f64>,
    pub old_heads: Tensor,
    pub old_log_std: [f64; 3],
    pub old_log_probs: Vec<f64>,
    /// Samples kept after dropping overflowing predecessor ratios.
    pub keep: Vec<bool>,
}

impl PolicyData {
    pub fn new(
        actor: &Actor,
        obs: Tensor,
        actions: Vec<ActionSample>,
        advantages: Vec<f64>,
        predecessor: Vec<f64>,
        ratio_log_limit: f64,
    ) -> Result<Self, TrainerError> {
        let n = obs.rows();
        if actions.len() != n || advantages.len() != n || predecessor.len() != n {
            return Err(TrainerError::Config("policy data lengths differ".into()));
        }
        let old_heads = actor.heads(&obs)?;
        let old_log_std = actor.log_std();
        let keep = predecessor
            .iter()
            .map(|&r| r.is_finite() && r >= 0.0 && r.ln() <= ratio_log_limit)
            .collect();
        let mut data = Self {
            obs,
            actions,
            advantages,
            predecessor,
            old_heads,
            old_log_std,
            old_log_probs: Vec::new(),
            keep,
        };
        data.old_log_probs = log_probs(actor, &actor.params, &data)?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn masked(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    fn action_batch(&self, actor: &Actor, idx: &[usize]) -> Result<ActionBatch, TrainerError> {
        let refs: Vec<&ActionSample> = idx.iter().map(|&i| &self.actions[i]).collect();
        Ok(ActionBatch::new(&refs, actor.layout)?)
    }
}

fn select_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor, TrainerError> {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| t.row_slice(i).to_vec()).collect();
    Ok(Tensor::from_rows(&rows)?)
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Log-probabilities of the recorded actions under `params`.
pub fn log_probs(actor: &Actor, params: &ParamSet, data: &PolicyData) -> Result<Vec<f64>, TrainerError> {
    let idx = all_indices(data.len());
    let mut tape = Tape::new();
    let b = params.bind_frozen(&mut tape);
    let x = tape.constant(data.obs.clone());
    let (heads, ls) = actor.forward(&mut tape, &b, x)?;
    let acts = data.action_batch(actor, &idx)?;
    let lp = log_prob_batch(&mut tape, heads, ls, &acts, actor.layout)?;
    Ok(tape.value(lp).data().to_vec())
}

/// Tape nodes for the ratio-weighted surrogate and the mean KL on `idx`.
struct Terms {
    surrogate: Var,
    kl: Var,
    ratio: Var,
}

fn build_terms(tape: &mut Tape, actor: &Actor, b: &crate::autodiff::Bound, data: &PolicyData, idx: &[usize], limit: f64) -> Result<Terms, TrainerError> {
    let obs = tape.constant(select_rows(&data.obs, idx)?);
    let (heads, ls) = actor.forward(tape, b, obs)?;
    let acts = data.action_batch(actor, idx)?;
    let lp = log_prob_batch(tape, heads, ls, &acts, actor.layout)?;
    let old = tape.constant(Tensor::column(&idx.iter().map(|&i| data.old_log_probs[i]).collect::<Vec<_>>()));
    let diff = tape.sub(lp, old)?;
    let diff = tape.clamp(diff, -limit, limit);
    let ratio = tape.exp(diff);
    let kept = idx.iter().filter(|&&i| data.keep[i]).count().max(1) as f64;
    let weights: Vec<f64> = idx
        .iter()
        .map(|&i| if data.keep[i] { data.predecessor[i] * data.advantages[i] / kept } else { 0.0 })
        .collect();
    let w = tape.constant(Tensor::column(&weights));
    let weighted = tape.mul(ratio, w)?;
    let surrogate = tape.sum(weighted);
    let old_heads = select_rows(&data.old_heads, idx)?;
    let kl = kl_batch(tape, &old_heads, &data.old_log_std, heads, ls, actor.layout)?;
    let kl = tape.mean(kl);
    Ok(Terms { surrogate, kl, ratio })
}

/// Surrogate `mean(predecessor * ratio * advantage)` and `(mean, max)` KL
/// from the pre-update policy, over the whole batch.
pub fn evaluate_candidate(actor: &Actor, params: &ParamSet, data: &PolicyData, limit: f64) -> Result<(f64, f64, f64), TrainerError> {
    let idx = all_indices(data.len());
    let mut tape = Tape::new();
    let b = params.bind_frozen(&mut tape);
    let obs = tape.constant(data.obs.clone());
    let (heads, ls) = actor.forward(&mut tape, &b, obs)?;
    let kl_rows = kl_batch(&mut tape, &data.old_heads, &data.old_log_std, heads, ls, actor.layout)?;
    let kl_max = tape.value(kl_rows).data().iter().cloned().fold(0.0, f64::max);
    let terms = build_terms(&mut tape, actor, &b, data, &idx, limit)?;
    Ok((tape.value(terms.surrogate).item(), tape.value(terms.kl).item(), kl_max))
}

/// Surrogate of the unchanged policy: the predecessor-weighted mean advantage.
pub fn surrogate_at_origin(actor: &Actor, data: &PolicyData, limit: f64) -> Result<f64, TrainerError> {
    Ok(evaluate_candidate(actor, &actor.params, data, limit)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub accepted: bool,
    /// Measured mean KL of the realized step (0 when rejected).
    pub kl: f64,
    pub kl_max: f64,
    pub surrogate_gain: f64,
    /// Backtracking tries used (1 = full step).
    pub tries: usize,
    pub masked: usize,
    /// Per-sample `new / old` probability ratio of the realized policy.
    pub ratios: Vec<f64>,
}

impl StepReport {
    fn identity(data: &PolicyData) -> Self {
        Self {
            accepted: true,
            ..Self::unchanged(data, 0)
        }
    }

    fn unchanged(data: &PolicyData, tries: usize) -> Self {
        Self {
            accepted: false,
            kl: 0.0,
            kl_max: 0.0,
            surrogate_gain: 0.0,
            tries,
            masked: data.masked(),
            ratios: vec![1.0; data.len()],
        }
    }
}

fn minibatches<R: Rng + ?Sized>(n: usize, parts: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx = all_indices(n);
    idx.shuffle(rng);
    let parts = parts.clamp(1, n.max(1));
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

fn penalty_coef(cfg: &TrainerConfig, gamma: f64, data: &PolicyData) -> f64 {
    match cfg.penalty {
        PenaltyMode::Fixed => cfg.penalty_coef,
        PenaltyMode::Adaptive => {
            let max_adv = data.advantages.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            4.0 * gamma * max_adv / (1.0 - gamma).powi(2).max(1e-12)
        }
    }
}

fn finish(actor: &mut Actor, data: &PolicyData, cfg: &TrainerConfig, candidate: ParamSet, tries: usize, accepted: bool, gain: f64, kl: f64, kl_max: f64) -> Result<StepReport, TrainerError> {
    if !accepted {
        return Ok(StepReport::unchanged(data, tries));
    }
    actor.params = candidate;
    let new_lp = log_probs(actor, &actor.params, data)?;
    let limit = cfg.ratio_log_limit;
    let ratios = new_lp
        .iter()
        .zip(&data.old_log_probs)
        .map(|(n, o)| (n - o).clamp(-limit, limit).exp())
        .collect();
    Ok(StepReport {
        accepted,
        kl,
        kl_max,
        surrogate_gain: gain,
        tries,
        masked: data.masked(),
        ratios,
    })
}

fn flat_grads(g: &ParamGrads) -> Vec<f64> {
    g.values().flat_map(|t| t.data().iter().copied()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Below this norm the surrogate gradient is round-off, not signal.
const FLAT_GRADIENT: f64 = 1e-10;

/// Full-batch gradient of the surrogate at the current parameters.
fn surrogate_gradient(actor: &Actor, data: &PolicyData, limit: f64) -> Result<Vec<f64>, TrainerError> {
    let mut tape = Tape::new();
    let b = actor.params.bind(&mut tape);
    let terms = build_terms(&mut tape, actor, &b, data, &all_indices(data.len()), limit)?;
    Ok(flat_grads(&b.gradients(&tape.backward(terms.surrogate)?)))
}

fn is_flat(g: &[f64]) -> bool {
    dot(g, g).sqrt() < FLAT_GRADIENT
}

/// Shrinks `start + direction` toward `start` until the KL bound holds and
/// the surrogate does not decrease.
fn backtrack(actor: &mut Actor, data: &PolicyData, cfg: &TrainerConfig, start: &[f64], direction: &[f64]) -> Result<StepReport, TrainerError> {
    let limit = cfg.ratio_log_limit;
    let base = surrogate_at_origin(actor, data, limit)?;
    let mut candidate = actor.params.clone();
    let mut scale = 1.0;
    for tries in 1..=cfg.backtrack_tries.max(1) {
        let flat: Vec<f64> = start.iter().zip(direction).map(|(s, d)| s + scale * d).collect();
        candidate.assign_flat(&flat);
        if candidate.all_finite() {
            let (sur, kl, kl_max) = evaluate_candidate(actor, &candidate, data, limit)?;
            let gain = sur - base;
            if kl.is_finite() && gain.is_finite() && kl <= cfg.kl_limit && gain >= 0.0 {
                return finish(actor, data, cfg, candidate, tries, true, gain, kl, kl_max);
            }
        }
        scale *= cfg.backtrack_factor;
    }
    Ok(StepReport::unchanged(data, cfg.backtrack_tries))
}

/// Penalized ascent on `surrogate - C * KL` with a fresh Adam, followed by
/// KL backtracking along the accumulated parameter change. A vanishing
/// surrogate gradient leaves the policy unchanged: the KL term alone has its
/// minimum at the start, and Adam would otherwise amplify round-off.
pub fn trust_region_step<R: Rng + ?Sized>(
    actor: &mut Actor,
    data: &PolicyData,
    cfg: &TrainerConfig,
    gamma: f64,
    rng: &mut R,
) -> Result<StepReport, TrainerError> {
    if is_flat(&surrogate_gradient(actor, data, cfg.ratio_log_limit)?) {
        return Ok(StepReport::identity(data));
    }
    let start = actor.params.flatten();
    let c = penalty_coef(cfg, gamma, data);
    let mut adam = Adam::new(cfg.actor_adam());
    let mut work = actor.clone();
    for _ in 0..cfg.epochs {
        for idx in minibatches(data.len(), cfg.minibatches, rng) {
            let mut tape = Tape::new();
            let b = work.params.bind(&mut tape);
            let terms = build_terms(&mut tape, &work, &b, data, &idx, cfg.ratio_log_limit)?;
            let pen = tape.scale(terms.kl, c);
            let obj = tape.sub(terms.surrogate, pen)?;
            if !tape.value(obj).is_finite() {
                return Ok(StepReport::unchanged(data, 0));
            }
            let grads = b.gradients(&tape.backward(obj)?);
            match adam.ascend(&mut work.params, &grads) {
                Ok(()) => {}
                Err(AutodiffError::NonFinite(_)) => return Ok(StepReport::unchanged(data, 0)),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let direction: Vec<f64> = work.params.flatten().iter().zip(&start).map(|(w, s)| w - s).collect();
    backtrack(actor, data, cfg, &start, &direction)
}

/// Clipped-ratio updates without predecessor weighting or backtracking.
pub fn clipped_step<R: Rng + ?Sized>(
    actor: &mut Actor,
    data: &PolicyData,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<StepReport, TrainerError> {
    let limit = cfg.ratio_log_limit;
    if is_flat(&surrogate_gradient(actor, data, limit)?) {
        return Ok(StepReport::identity(data));
    }
    let base = surrogate_at_origin(actor, data, limit)?;
    let mut adam = Adam::new(cfg.actor_adam());
    let mut work = actor.clone();
    for _ in 0..cfg.epochs {
        for idx in minibatches(data.len(), cfg.minibatches, rng) {
            let mut tape = Tape::new();
            let b = work.params.bind(&mut tape);
            let terms = build_terms(&mut tape, &work, &b, data, &idx, limit)?;
            let adv = tape.constant(Tensor::column(&idx.iter().map(|&i| data.advantages[i]).collect::<Vec<_>>()));
            let lo = 1.0 - cfg.clip_eps;
            let hi = 1.0 + cfg.clip_eps;
            let plain = tape.mul(terms.ratio, adv)?;
            let clipped = tape.clamp(terms.ratio, lo, hi);
            let clipped = tape.mul(clipped, adv)?;
            let obj = tape.minimum(plain, clipped)?;
            let obj = tape.mean(obj);
            if !tape.value(obj).is_finite() {
                return Ok(StepReport::unchanged(data, 0));
            }
            let grads = b.gradients(&tape.backward(obj)?);
            match adam.ascend(&mut work.params, &grads) {
                Ok(()) => {}
                Err(AutodiffError::NonFinite(_)) => return Ok(StepReport::unchanged(data, 0)),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let (sur, kl, kl_max) = evaluate_candidate(actor, &work.params, data, limit)?;
    finish(actor, data, cfg, work.params, 1, true, sur - base, kl, kl_max)
}


fn kl_gradient(actor: &Actor, params: &ParamSet, data: &PolicyData) -> Result<Vec<f64>, TrainerError> {
    let idx = all_indices(data.len());
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let terms = build_terms(&mut tape, actor, &b, data, &idx, f64::INFINITY)?;
    Ok(flat_grads(&b.gradients(&tape.backward(terms.kl)?)))
}

/// Natural-gradient step: conjugate gradient on the KL Hessian (applied by
/// central differences of the KL gradient), scaled to the KL limit, then
/// backtracked.
pub fn natural_gradient_step(actor: &mut Actor, data: &PolicyData, cfg: &TrainerConfig) -> Result<StepReport, TrainerError> {
    let start = actor.params.flatten();
    let g = surrogate_gradient(actor, data, cfg.ratio_log_limit)?;
    if !g.iter().all(|v| v.is_finite()) {
        return Ok(StepReport::unchanged(data, 0));
    }
    if is_flat(&g) {
        return Ok(StepReport::identity(data));
    }
    let mut probe = actor.params.clone();
    let mut fvp = |v: &[f64]| -> Result<Vec<f64>, TrainerError> {
        let norm = dot(v, v).sqrt().max(1e-12);
        let eps = 1e-5 / norm;
        let shifted = |k: f64| start.iter().zip(v).map(|(s, d)| s + k * d).collect::<Vec<_>>();
        probe.assign_flat(&shifted(eps));
        let plus = kl_gradient(actor, &probe, data)?;
        probe.assign_flat(&shifted(-eps));
        let minus = kl_gradient(actor, &probe, data)?;
        Ok(plus
            .iter()
            .zip(&minus)
            .zip(v)
            .map(|((p, m), vi)| (p - m) / (2.0 * eps) + cfg.cg_damping * vi)
            .collect())
    };
    // Conjugate gradient for F x = g.
    let mut x = vec![0.0; g.len()];
    let mut r = g.clone();
    let mut p = g.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..cfg.cg_iters {
        let ap = fvp(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new < 1e-20 {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let xfx = dot(&x, &fvp(&x)?);
    if !(xfx > 0.0) || !xfx.is_finite() {
        return Ok(StepReport::unchanged(data, 0));
    }
    let step = (2.0 * cfg.kl_limit / xfx).sqrt();
    let direction: Vec<f64> = x.iter().map(|v| v * step).collect();
    backtrack(actor, data, cfg, &start, &direction)
}

/// Squared-error regression of the critic onto normalized targets.
/// Returns the mean loss over the final epoch.
#[allow(clippy::too_many_arguments)]
pub fn critic_regression<R: Rng + ?Sized>(
    critic: &mut Critic,
    adam: &mut Adam,
    batch: &RolloutBatch,
    targets: &[f64],
    cfg: &TrainerConfig,
    with_graphs: bool,
    rng: &mut R,
) -> Result<f64, TrainerError> {
    let mut last = 0.0;
    for _ in 0..cfg.critic_epochs {
        let mut total = 0.0;
        let parts = minibatches(batch.len(), cfg.minibatches, rng);
        let count = parts.len();
        for idx in parts {
            let inputs = batch.critic_batch(&idx, with_graphs)?;
            let mut tape = Tape::new();
            let b = critic.params.bind(&mut tape);
            let pred = critic.forward(&mut tape, &b, &inputs)?;
            let y = tape.constant(Tensor::column(&idx.iter().map(|&i| targets[i]).collect::<Vec<_>>()));
            let err = tape.sub(pred, y)?;
            let sq = tape.square(err)?;
            let loss = tape.mean(sq);
            total += tape.value(loss).item();
            let grads = b.gradients(&tape.backward(loss)?);
            adam.descend(&mut critic.params, &grads)?;
        }
        last = total / count as f64;
    }
    Ok(last)
}
