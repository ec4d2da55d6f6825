use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::Trainer;
use super::TrainerError;

/// A game in which one agent can be re-optimized while the rest stay fixed.
pub trait DeviationGame {
    fn num_agents(&self) -> usize;
    /// Return of `agent` under the current joint policy.
    fn evaluate(&mut self, agent: usize) -> Result<f64, TrainerError>;
    /// One improvement round for `agent` alone.
    fn improve(&mut self, agent: usize) -> Result<(), TrainerError>;
    /// Fingerprint of every agent's parameters except `agent`.
    fn frozen_checksum(&self, agent: usize) -> u64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub agent: usize,
    pub original: f64,
    pub best: f64,
    /// `(best - original) / |original|`.
    pub improvement: f64,
    pub evaluations: Vec<f64>,
    pub frozen_unchanged: bool,
}

/// Re-trains only `agent` for `budget` rounds and reports the best relative
/// gain in its return. The starting point counts as a candidate, so the
/// improvement is never negative and is exactly 0 for a zero budget.
pub fn ne_deviation_probe<G: DeviationGame>(game: &mut G, agent: usize, budget: usize) -> Result<ProbeReport, TrainerError> {
    if agent >= game.num_agents() {
        return Err(TrainerError::Config(format!("no agent {agent}")));
    }
    let frozen = game.frozen_checksum(agent);
    let original = game.evaluate(agent)?;
    let mut best = original;
    let mut evaluations = Vec::with_capacity(budget);
    for _ in 0..budget {
        game.improve(agent)?;
        let r = game.evaluate(agent)?;
        evaluations.push(r);
        if r > best {
            best = r;
        }
    }
    let improvement = if best == original {
        0.0
    } else {
        (best - original) / original.abs().max(1e-12)
    };
    Ok(ProbeReport {
        agent,
        original,
        best,
        improvement,
        evaluations,
        frozen_unchanged: game.frozen_checksum(agent) == frozen,
    })
}

impl DeviationGame for Trainer {
    fn num_agents(&self) -> usize {
        self.agents.len()
    }

    fn evaluate(&mut self, agent: usize) -> Result<f64, TrainerError> {
        Ok(Trainer::evaluate(self)?.mean[agent])
    }

    fn improve(&mut self, agent: usize) -> Result<(), TrainerError> {
        let batch = self.rollout()?;
        self.update_agent(agent, &batch, vec![1.0; batch.len()])?;
        Ok(())
    }

    fn frozen_checksum(&self, agent: usize) -> u64 {
        self.checksum_except(Some(agent))
    }
}

/// Two-player bimatrix game with mixed strategies `P(action 0)` held as
/// logits, improved by sampled policy-gradient steps.
#[derive(Clone, Debug)]
pub struct MatrixGame {
    pub payoffs: [[[f64; 2]; 2]; 2],
    pub logits: [f64; 2],
    pub lr: f64,
    pub samples: usize,
    rng: ChaCha8Rng,
}

impl MatrixGame {
    /// Matching-pennies payoffs shifted to be positive; the unique
    /// equilibrium mixes 50/50 for both players.
    pub fn pennies(seed: u64) -> Self {
        Self {
            payoffs: [[[2.0, 0.0], [0.0, 2.0]], [[0.0, 2.0], [2.0, 0.0]]],
            logits: [0.0, 0.0],
            lr: 0.5,
            samples: 64,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn prob(&self, player: usize) -> f64 {
        1.0 / (1.0 + (-self.logits[player]).exp())
    }

    /// Expected payoff of `player`.
    pub fn value(&self, player: usize) -> f64 {
        let (p, q) = (self.prob(0), self.prob(1));
        let mix = [[p * q, p * (1.0 - q)], [(1.0 - p) * q, (1.0 - p) * (1.0 - q)]];
        let mut v = 0.0;
        for (i, row) in mix.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                v += w * self.payoffs[player][i][j];
            }
        }
        v
    }
}

impl DeviationGame for MatrixGame {
    fn num_agents(&self) -> usize {
        2
    }

    fn evaluate(&mut self, agent: usize) -> Result<f64, TrainerError> {
        Ok(self.value(agent))
    }

    fn improve(&mut self, agent: usize) -> Result<(), TrainerError> {
        let other = 1 - agent;
        let (pa, po) = (self.prob(agent), self.prob(other));
        let mut grad = 0.0;
        for _ in 0..self.samples {
            let mine = usize::from(self.rng.gen::<f64>() >= pa);
            let theirs = usize::from(self.rng.gen::<f64>() >= po);
            let (i, j) = if agent == 0 { (mine, theirs) } else { (theirs, mine) };
            let reward = self.payoffs[agent][i][j];
            // d/dlogit log P(mine)
            let score = if mine == 0 { 1.0 - pa } else { -pa };
            grad += reward * score;
        }
        self.logits[agent] += self.lr * grad / self.samples as f64;
        Ok(())
    }

    fn frozen_checksum(&self, agent: usize) -> u64 {
        self.logits[1 - agent].to_bits()
    }
}
