use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{emit_reward_plot, emit_trajectory_plot};
use super::HarnessError;
use crate::autodiff::write_checkpoint;
use crate::env::{ScenarioConfig, TraceWriter};
use crate::trainer::{ne_deviation_probe, MetricsWriter, ProbeReport, Trainer, TrainerConfig, Variant};

/// Artifact options that do not affect training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Iterations each agent may re-train alone in the deviation probe; 0
    /// skips the probe.
    pub probe_budget: usize,
    pub reward_window: usize,
    pub trajectory_last_k: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            probe_budget: 20,
            reward_window: 10,
            trajectory_last_k: 25,
        }
    }
}

/// Everything needed to reproduce one run. `scenario.seed` seeds training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSnapshot {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub run: RunOptions,
}

impl RunSnapshot {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            trainer: TrainerConfig::default(),
            run: RunOptions::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let snap: Self = toml::from_str(s)?;
        snap.scenario.validate()?;
        snap.trainer.validate()?;
        Ok(snap)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }
}

/// Reads either a full snapshot (`[scenario]`, `[trainer]`, `[run]`) or a
/// bare scenario file.
pub fn load_snapshot(path: &Path) -> Result<RunSnapshot, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let table: toml::Table = toml::from_str(&text)?;
    if table.contains_key("scenario") {
        RunSnapshot::from_toml_str(&text)
    } else {
        Ok(RunSnapshot::new(ScenarioConfig::from_toml_str(&text)?))
    }
}

/// A cross product of variants and seeds over one base snapshot.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub base: RunSnapshot,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.variants.is_empty() {
            return Err(HarnessError::Invalid("variant list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("seed list is empty".into()));
        }
        self.base.scenario.validate()?;
        self.base.trainer.validate()?;
        Ok(())
    }

    /// Snapshot and output directory of every run, variant-major.
    pub fn runs(&self) -> Vec<(RunSnapshot, PathBuf)> {
        let mut out = Vec::with_capacity(self.variants.len() * self.seeds.len());
        for &v in &self.variants {
            for &seed in &self.seeds {
                let mut snap = self.base.clone();
                snap.trainer.variant = v;
                snap.scenario.seed = seed;
                out.push((snap, self.out.join(v.name()).join(format!("seed_{seed}"))));
            }
        }
        out
    }
}

/// Files written for one run.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub snapshot: PathBuf,
    pub metrics: PathBuf,
    pub trajectory: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub probes: Option<PathBuf>,
    /// Trained state, for callers that continue from it.
    pub trainer: Trainer,
    pub probe_reports: Vec<ProbeReport>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunArtifacts>, HarnessError> {
    spec.validate()?;
    spec.runs().into_iter().map(|(snap, dir)| run_single(&snap, &dir)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<(), HarnessError> {
    write_checkpoint(create(path)?, &trainer.checkpoint_params())?;
    Ok(())
}

/// Trains one configuration and writes its artifacts under `dir`:
/// `resolved.toml`, `metrics.csv`, `trajectory.csv`, `checkpoints/`,
/// `rewards.svg`, `trajectory.svg` and `ne_probe.csv`.
pub fn run_single(snap: &RunSnapshot, dir: &Path) -> Result<RunArtifacts, HarnessError> {
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| HarnessError::io(&ckpt_dir, e))?;
    let snapshot = dir.join("resolved.toml");
    fs::write(&snapshot, snap.to_toml_string()?).map_err(|e| HarnessError::io(&snapshot, e))?;

    let mut trainer = Trainer::new(snap.scenario.clone(), snap.trainer.clone(), snap.scenario.seed)?;
    let metrics = dir.join("metrics.csv");
    let mut writer = MetricsWriter::new(create(&metrics)?);
    let mut checkpoints = Vec::new();
    let every = snap.trainer.checkpoint_every;
    for k in 0..snap.trainer.iterations {
        let report = trainer.train_iteration()?;
        writer.write_all(&report.records)?;
        let mean = report.records.iter().map(|r| r.mean_episode_reward).sum::<f64>() / report.records.len() as f64;
        log::info!("{} seed {} iteration {k}: mean reward {mean:.3}", snap.trainer.variant, snap.scenario.seed);
        if every > 0 && (k + 1) % every == 0 {
            let path = ckpt_dir.join(format!("iter_{:05}.ckpt", k + 1));
            save_checkpoint(&trainer, &path)?;
            checkpoints.push(path);
        }
    }
    writer.into_inner()?;
    let final_ckpt = ckpt_dir.join("final.ckpt");
    save_checkpoint(&trainer, &final_ckpt)?;
    checkpoints.push(final_ckpt);

    let trajectory = dir.join("trajectory.csv");
    let seed = snap.trainer.eval_seeds[0];
    let (_, trace) = trainer.greedy_episode(seed, true)?;
    let mut tw = TraceWriter::new(create(&trajectory)?, snap.scenario.num_uavs, snap.scenario.num_gus)?;
    for rec in &trace {
        tw.write(rec)?;
    }
    tw.finish()?;

    let mut plots = Vec::new();
    if snap.trainer.iterations > 0 {
        let rewards = dir.join("rewards.svg");
        emit_reward_plot(&[&metrics], snap.run.reward_window, &rewards)?;
        plots.push(rewards);
    }
    let traj_svg = dir.join("trajectory.svg");
    emit_trajectory_plot(&trajectory, snap.run.trajectory_last_k.min(snap.scenario.t_max), &traj_svg)?;
    plots.push(traj_svg);

    let (probes, probe_reports) = if snap.run.probe_budget > 0 {
        let reports = probe_all(&trainer, snap.run.probe_budget)?;
        let path = dir.join("ne_probe.csv");
        write_probes(&reports, &path)?;
        (Some(path), reports)
    } else {
        (None, Vec::new())
    };

    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        snapshot,
        metrics,
        trajectory,
        checkpoints,
        plots,
        probes,
        trainer,
        probe_reports,
    })
}

/// Deviation probe for every agent, each on its own copy of `trainer`.
pub fn probe_all(trainer: &Trainer, budget: usize) -> Result<Vec<ProbeReport>, HarnessError> {
    (0..trainer.num_agents())
        .map(|i| Ok(ne_deviation_probe(&mut trainer.clone(), i, budget)?))
        .collect()
}

#[derive(Serialize)]
struct ProbeRow {
    agent: usize,
    original: f64,
    best: f64,
    improvement: f64,
    frozen_unchanged: bool,
}

pub fn write_probes(reports: &[ProbeReport], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in reports {
        w.serialize(ProbeRow {
            agent: r.agent,
            original: r.original,
            best: r.best,
            improvement: r.improvement,
            frozen_unchanged: r.frozen_unchanged,
        })?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}
