use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use uavmarl::autodiff::read_checkpoint;
use uavmarl::env::ScenarioConfig;
use uavmarl::harness::{
    emit_reward_plot, emit_trajectory_plot, gradient_suite, load_snapshot, probe_all, run_experiment,
    summarize_final_rewards, write_probes, write_summary, ExperimentSpec, RunSnapshot,
};
use uavmarl::trainer::{Trainer, Variant};

/// Relative tolerance for the gradient checks.
const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "uavmarl", version, about = "Multi-UAV downlink training and analysis")]
struct Cli {
    /// Output root; relative artifact paths resolve against it.
    #[arg(long, global = true, env = "UAVMARL_OUT", default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every (variant, seed) pair and write its artifacts.
    Run(RunArgs),
    /// Plot smoothed reward curves from metrics files or run directories.
    PlotRewards {
        /// Metrics files, or directories searched for `metrics.csv`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Output file name under the output root.
        #[arg(long, default_value = "rewards.svg")]
        file: PathBuf,
    },
    /// Plot UAV paths and pairings over the last steps of a trajectory.
    PlotTrajectory {
        trajectory: PathBuf,
        #[arg(long = "last-k", default_value_t = 25)]
        last_k: usize,
        #[arg(long, default_value = "trajectory.svg")]
        file: PathBuf,
    },
    /// Median final reward per variant and agent.
    Summarize {
        /// Metrics files, or directories searched for `metrics.csv`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the table to this file under the output root.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Re-train each agent alone against frozen partners and report the
    /// relative gain.
    NeProbe {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        budget: usize,
        /// Start from this checkpoint instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference checks of the MLP, attention, GAT and GRN layers.
    GradCheck {
        /// Seeds as a list or ranges, e.g. `0-99` or `1,5,9`.
        #[arg(long, default_value = "0-99")]
        seeds: String,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Snapshot (`resolved.toml`) or bare scenario TOML.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Scenario preset: 2x4, 2x8, 3x9 or 4x16.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated variants; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    /// Seeds as a list or ranges; defaults to the config's.
    #[arg(long)]
    seeds: Option<String>,
    /// Training iterations per run.
    #[arg(long)]
    iters: Option<usize>,
    /// Deviation-probe budget per agent after training (0 disables).
    #[arg(long = "probe-budget")]
    probe_budget: Option<usize>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
                if b < a {
                    bail!("empty seed range `{part}`");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

impl RunArgs {
    fn snapshot(&self) -> Result<RunSnapshot> {
        let mut snap = match (&self.config, &self.preset) {
            (Some(path), _) => load_snapshot(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(p)) => RunSnapshot::new(ScenarioConfig::preset(p)?),
            (None, None) => RunSnapshot::new(ScenarioConfig::preset("2x4")?),
        };
        if let Some(k) = self.iters {
            snap.trainer.iterations = k;
        }
        if let Some(b) = self.probe_budget {
            snap.run.probe_budget = b;
        }
        Ok(snap)
    }

    fn spec(&self, out: &Path) -> Result<ExperimentSpec> {
        let base = self.snapshot()?;
        let variants = if self.variant.is_empty() {
            vec![base.trainer.variant]
        } else {
            self.variant.clone()
        };
        let seeds = match &self.seeds {
            Some(s) => parse_seeds(s)?,
            None => vec![base.scenario.seed],
        };
        Ok(ExperimentSpec {
            base,
            variants,
            seeds,
            out: out.to_path_buf(),
        })
    }
}

/// Expands directories into the `metrics.csv` files beneath them.
fn collect_metrics(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            walk(p, &mut out)?;
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no metrics files found");
    }
    Ok(out)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let spec = args.spec(&cli.out)?;
            let runs = run_experiment(&spec)?;
            for r in &runs {
                let last = r.trainer.evaluate()?;
                println!("{}: final mean rewards {:?}", r.dir.display(), last.mean);
            }
        }
        Command::PlotRewards { inputs, window, file } => {
            let files = collect_metrics(&inputs)?;
            let out = cli.out.join(file);
            ensure_parent(&out)?;
            emit_reward_plot(&files, window, &out)?;
            println!("{}", out.display());
        }
        Command::PlotTrajectory { trajectory, last_k, file } => {
            let out = cli.out.join(file);
            ensure_parent(&out)?;
            emit_trajectory_plot(&trajectory, last_k, &out)?;
            println!("{}", out.display());
        }
        Command::Summarize { inputs, file } => {
            let table = summarize_final_rewards(&collect_metrics(&inputs)?)?;
            print!("{}", table.to_csv());
            if let Some(f) = file {
                let out = cli.out.join(f);
                ensure_parent(&out)?;
                write_summary(&table, &out)?;
            }
        }
        Command::NeProbe { run, budget, checkpoint } => {
            let spec = run.spec(&cli.out)?;
            for (snap, dir) in spec.runs() {
                let mut trainer = Trainer::new(snap.scenario.clone(), snap.trainer.clone(), snap.scenario.seed)?;
                match &checkpoint {
                    Some(path) => {
                        let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                        trainer.restore(&read_checkpoint(std::io::BufReader::new(f))?)?;
                    }
                    None => {
                        for _ in 0..snap.trainer.iterations {
                            trainer.train_iteration()?;
                        }
                    }
                }
                let reports = probe_all(&trainer, budget)?;
                fs::create_dir_all(&dir)?;
                let path = dir.join("ne_probe.csv");
                write_probes(&reports, &path)?;
                for r in &reports {
                    println!(
                        "{} agent {}: original {:.4} best {:.4} improvement {:.4}",
                        snap.trainer.variant, r.agent, r.original, r.best, r.improvement
                    );
                }
            }
        }
        Command::GradCheck { seeds } => {
            let seeds = parse_seeds(&seeds)?;
            let report = gradient_suite(seeds.iter().copied())?;
            let mut failed = false;
            for c in &report {
                let ok = c.max_rel_error <= GRAD_TOLERANCE;
                failed |= !ok;
                println!(
                    "{:<10} max relative error {:.3e} (seed {}, {} entries) {}",
                    c.component,
                    c.max_rel_error,
                    c.worst_seed,
                    c.checked,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed {
                bail!("gradient check exceeded {GRAD_TOLERANCE}");
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("1,3-5, 9").unwrap(), vec![1, 3, 4, 5, 9]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("5-2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_override_snapshot() {
        let cli = Cli::try_parse_from([
            "uavmarl", "run", "--preset", "2x8", "--variant", "matr,ippo", "--seeds", "1-3", "--iters", "7",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else { panic!("expected run") };
        let spec = args.spec(Path::new("o")).unwrap();
        assert_eq!(spec.variants, vec![Variant::Matr, Variant::Ippo]);
        assert_eq!(spec.seeds, vec![1, 2, 3]);
        assert_eq!(spec.base.trainer.iterations, 7);
        assert_eq!(spec.base.scenario.num_gus, 8);
        assert_eq!(spec.runs().len(), 6);
    }
}
