//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) before asserting.

use std::io::Write;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uavmarl::dist::{ActionSample, HybridDistribution};
use uavmarl::env::{
    free_space_loss_db, link_rate_bps, reset, resolve_pairing, step, AllocationScheme, HybridAction, PairingIntent,
    ScenarioConfig,
};
use uavmarl::harness::{gradient_suite, load_snapshot, median, probe_all, run_single, RunOptions, RunSnapshot};
use uavmarl::trainer::{ne_deviation_probe, IterationReport, MatrixGame, Trainer, TrainerConfig, Variant};

const TRAIN_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PROBE_SEEDS: usize = 3;
const PROBE_BUDGET: usize = 20;
const DESK_ITERATIONS: usize = 200;

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{verdict}] criterion {id:>2} {name}: {detail}");
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::preset("2x4").unwrap()
}

#[test]
fn criterion_01_channel_oracle() {
    let cfg = ScenarioConfig {
        sigma_los_db: 0.0,
        ..desk()
    };
    let pl = free_space_loss_db(100.0, 2e9) + cfg.sigma_los_db;
    // pick the received power that makes SNR exactly 1 at B = 1 MHz
    let b = 1e6;
    let p_w = cfg.n0_w_per_hz * b;
    let rate = link_rate_bps(p_w, b, 0.0, true, &cfg).unwrap();
    let pl_ok = (pl - 78.462).abs() <= 0.01;
    let rate_ok = rate == b;
    report(
        1,
        "channel oracle",
        pl_ok && rate_ok,
        &format!("path loss {pl:.4} dB (target 78.462 +- 0.01), rate at SNR 1 = {rate} bps for B = {b}"),
    );
    assert!(pl_ok && rate_ok);
}

fn random_action(rng: &mut ChaCha8Rng, n: usize, p: AllocationScheme, b: AllocationScheme) -> HybridAction {
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let claims = logits.iter().map(|&l| l > 0.0).collect();
    HybridAction {
        velocity_cmd: [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)],
        pairing: PairingIntent::from_claims(claims, logits),
        power_scheme: p,
        bandwidth_scheme: b,
        random_proportions_p: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
        random_proportions_b: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

#[test]
fn criterion_02_allocation_conservation() {
    let configs = [desk(), ScenarioConfig::preset("3x9").unwrap(), ScenarioConfig::preset("4x16").unwrap()];
    let mut states: Vec<_> = configs.iter().map(|c| reset(c, 11).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_sum = 0.0f64;
    let mut floor_violations = 0usize;
    let mut combos = std::collections::BTreeSet::new();
    let steps = 10_000;
    for k in 0..steps {
        let c = k % configs.len();
        let cfg = &configs[c];
        let p = AllocationScheme::ALL[(k / 3) % 4];
        let b = AllocationScheme::ALL[(k / 12) % 4];
        combos.insert((cfg.num_uavs, p.index(), b.index()));
        let actions: Vec<_> = (0..cfg.num_uavs).map(|_| random_action(&mut rng, cfg.num_gus, p, b)).collect();
        let out = step(&states[c], &actions, cfg).unwrap();
        let pairing = &out.next_state.pairing;
        for m in 0..cfg.num_uavs {
            let row = pairing.row(m);
            for (alloc, total, floor) in [
                (&out.allocation.power_w[m], cfg.p_total_w(), cfg.p_min_w),
                (&out.allocation.bandwidth_hz[m], cfg.b_total_hz, cfg.b_min_hz),
            ] {
                let sum: f64 = alloc.iter().sum();
                worst_sum = worst_sum.max((sum - total).abs() / total);
                for (v, &served) in alloc.iter().zip(row) {
                    let ok = if served { *v >= floor * (1.0 - 1e-12) } else { *v == 0.0 };
                    floor_violations += usize::from(!ok);
                }
            }
        }
        states[c] = if out.done { reset(cfg, rng.gen()).unwrap() } else { out.next_state };
    }
    let passed = worst_sum <= 1e-9 && floor_violations == 0 && combos.len() == 48;
    report(
        2,
        "allocation conservation",
        passed,
        &format!(
            "{steps} steps, {} (M, power, bandwidth) combinations, worst relative sum error {worst_sum:.2e}, floor violations {floor_violations}",
            combos.len()
        ),
    );
    assert!(passed);
}

fn pairing_sweep(seed: u64, calls: usize) -> (Vec<Vec<usize>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut owners = Vec::with_capacity(calls);
    let mut violations = 0;
    for _ in 0..calls {
        let m = rng.gen_range(2..=4);
        let n = rng.gen_range(m..=16);
        let uavs: Vec<[f64; 3]> = (0..m)
            .map(|_| [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(10.0..100.0)])
            .collect();
        let gus: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), 0.0]).collect();
        let intents: Vec<PairingIntent> = (0..m)
            .map(|_| {
                let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let claims = (0..n).map(|_| rng.gen_bool(0.4)).collect();
                PairingIntent::from_claims(claims, logits)
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let a = resolve_pairing(&intents, &order, &uavs, &gus).unwrap();
        let again = resolve_pairing(&intents, &order, &uavs, &gus).unwrap();
        let one_cell = (0..n).all(|j| (0..m).filter(|&i| a.is_paired(i, j)).count() == 1);
        let nonempty = (0..m).all(|i| a.served_count(i) >= 1);
        violations += usize::from(!(one_cell && nonempty && a == again));
        owners.push((0..n).map(|j| a.owner(j)).collect());
    }
    (owners, violations)
}

#[test]
fn criterion_03_pairing_validity() {
    let calls = 10_000;
    let (first, violations) = pairing_sweep(77, calls);
    let (second, _) = pairing_sweep(77, calls);
    let deterministic = first == second;
    let passed = violations == 0 && deterministic;
    report(
        3,
        "pairing validity",
        passed,
        &format!("{calls} calls, violations {violations}, seeded replay identical: {deterministic}"),
    );
    assert!(passed);
}

#[test]
fn criterion_04_gradient_checks() {
    let checks = gradient_suite(0..100).unwrap();
    let passed = checks.iter().all(|c| c.max_rel_error <= 1e-4);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.2e}", c.component, c.max_rel_error))
        .collect();
    report(4, "gradient checks", passed, &format!("100 seeds, max relative error: {}", detail.join(", ")));
    assert!(passed);
}

fn random_head(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, [f64; 3]) {
    let row = (0..3 + n + 8).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (row, [rng.gen_range(-2.0..1.0), rng.gen_range(-2.0..1.0), rng.gen_range(-2.0..1.0)])
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> HybridDistribution {
    let (row, log_std) = random_head(rng, n);
    HybridDistribution::from_head(&row, log_std).unwrap()
}

#[test]
fn criterion_05_distribution_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut self_kl_max = 0.0f64;
    let mut kl_min = f64::INFINITY;
    for k in 0..10_000 {
        let n = rng.gen_range(2..=8);
        let (row, log_std) = random_head(&mut rng, n);
        let p = HybridDistribution::from_head(&row, log_std).unwrap();
        // half the pairs are tiny perturbations, where round-off could go negative
        let q = if k % 2 == 0 {
            random_distribution(&mut rng, n)
        } else {
            let near: Vec<f64> = row.iter().map(|x| x + rng.gen_range(-1e-6..1e-6)).collect();
            HybridDistribution::from_head(&near, log_std).unwrap()
        };
        self_kl_max = self_kl_max.max(p.kl(&p).unwrap().abs());
        kl_min = kl_min.min(p.kl(&q).unwrap());
    }
    let base = random_distribution(&mut rng, 3);
    let shifted = HybridDistribution {
        velocity_mean: [0.0; 3],
        velocity_log_std: [0.0; 3],
        ..base.clone()
    };
    let unit = HybridDistribution {
        velocity_mean: [1.0, 0.0, 0.0],
        ..shifted.clone()
    };
    let gauss = unit.kl(&shifted).unwrap();

    let d = random_distribution(&mut rng, 2);
    let mut mass = 0.0;
    for bits in 0..4u32 {
        for ps in 0..4 {
            for bs in 0..4 {
                let a = ActionSample {
                    raw_velocity: [0.0; 3],
                    pairing: vec![bits & 1 == 1, bits & 2 == 2],
                    power_scheme: ps,
                    bandwidth_scheme: bs,
                    random_proportions_p: vec![1.0; 2],
                    random_proportions_b: vec![1.0; 2],
                };
                mass += d.discrete_log_prob(&a).unwrap().exp();
            }
        }
    }
    let passed = self_kl_max == 0.0 && kl_min >= 0.0 && (gauss - 0.5).abs() <= 1e-9 && (mass - 1.0).abs() <= 1e-9;
    report(
        5,
        "distribution properties",
        passed,
        &format!(
            "max |KL(p,p)| {self_kl_max:.1e}, min KL over 1e4 pairs (half near-identical) {kl_min:.3e}, unit-shift Gaussian KL {gauss:.12}, N=2 discrete mass {mass:.12}"
        ),
    );
    assert!(passed);
}

/// Desk-preset training of one variant over every seed, with per-iteration
/// reports kept for inspection.
struct DeskRuns {
    trainers: Vec<Trainer>,
    reports: Vec<Vec<IterationReport>>,
}

impl DeskRuns {
    fn train(variant: Variant) -> Self {
        let mut trainers = Vec::new();
        let mut reports = Vec::new();
        for &seed in &TRAIN_SEEDS {
            let config = TrainerConfig {
                variant,
                iterations: DESK_ITERATIONS,
                ..Default::default()
            };
            let mut t = Trainer::new(desk(), config, seed).unwrap();
            let runs: Vec<IterationReport> = (0..DESK_ITERATIONS).map(|_| t.train_iteration().unwrap()).collect();
            trainers.push(t);
            reports.push(runs);
        }
        Self { trainers, reports }
    }

    /// Agent-averaged evaluated reward per iteration, per seed.
    fn curves(&self) -> Vec<Vec<f64>> {
        self.reports
            .iter()
            .map(|run| {
                run.iter()
                    .map(|r| r.records.iter().map(|x| x.mean_episode_reward).sum::<f64>() / r.records.len() as f64)
                    .collect()
            })
            .collect()
    }
}

fn window_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn ga_matr() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| DeskRuns::train(Variant::GaMatr))
}

fn matr() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| DeskRuns::train(Variant::Matr))
}

#[test]
fn criterion_06_trust_region_contract() {
    let runs = ga_matr();
    let kl_limit = TrainerConfig::default().kl_limit;
    let (mut accepted, mut violations, mut worst_origin) = (0usize, 0usize, 0.0f64);
    let mut max_kl = 0.0f64;
    for run in &runs.reports {
        for it in run {
            let first = it.order[0];
            worst_origin = worst_origin.max(it.surrogate_at_origin[first].abs());
            for s in it.steps.iter().filter(|s| s.accepted) {
                accepted += 1;
                max_kl = max_kl.max(s.kl);
                violations += usize::from(!(s.kl <= kl_limit && s.surrogate_gain >= 0.0));
            }
        }
    }
    let total = runs.reports.len() * DESK_ITERATIONS * desk().num_uavs;
    let passed = violations == 0 && worst_origin <= 1e-9 && accepted > 0;
    report(
        6,
        "trust-region contract",
        passed,
        &format!(
            "{accepted}/{total} steps accepted, violations {violations}, max accepted KL {max_kl:.5} (limit {kl_limit}), max |surrogate at origin| {worst_origin:.1e}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_learning_signal() {
    let k = DESK_ITERATIONS / 10;
    let ratios: Vec<f64> = ga_matr()
        .curves()
        .iter()
        .map(|c| window_mean(&c[c.len() - k..]) / window_mean(&c[..k]))
        .collect();
    let med = median(&ratios).unwrap();
    let passed = med >= 1.2;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    report(
        7,
        "learning signal",
        passed,
        &format!("final/first 10% reward ratio per seed [{}], median {med:.3} (need >= 1.2)", shown.join(", ")),
    );
    assert!(passed);
}

/// Mean agent-averaged reward over the final tenth of training, per seed.
fn final_rewards(runs: &DeskRuns) -> Vec<f64> {
    let k = DESK_ITERATIONS / 10;
    runs.curves().iter().map(|c| window_mean(&c[c.len() - k..])).collect()
}

#[test]
fn criterion_08_ablation_direction() {
    let ga = final_rewards(ga_matr());
    let plain = final_rewards(matr());
    let (mg, mp) = (median(&ga).unwrap(), median(&plain).unwrap());
    let passed = mg >= mp;
    report(
        8,
        "ablation direction",
        passed,
        &format!("median final reward GA-MATR {mg:.2} vs MATR {mp:.2} over {} seeds", TRAIN_SEEDS.len()),
    );
    assert!(passed);
}

#[test]
fn criterion_09_deviation_probe() {
    let runs = ga_matr();
    let m = desk().num_uavs;
    let mut per_agent = vec![Vec::new(); m];
    let mut frozen = true;
    for trainer in runs.trainers.iter().take(PROBE_SEEDS) {
        for r in probe_all(trainer, PROBE_BUDGET).unwrap() {
            frozen &= r.frozen_unchanged;
            per_agent[r.agent].push(r.improvement);
        }
    }
    let medians: Vec<f64> = per_agent.iter().map(|v| median(v).unwrap()).collect();
    let game = MatrixGame::pennies(9);
    let stub = (0..2)
        .map(|i| ne_deviation_probe(&mut game.clone(), i, PROBE_BUDGET).unwrap().improvement)
        .fold(0.0f64, f64::max);
    let passed = medians.iter().all(|&x| x <= 0.05) && stub <= 0.01 && frozen;
    let shown: Vec<String> = per_agent
        .iter()
        .zip(&medians)
        .enumerate()
        .map(|(i, (v, med))| format!("agent {i} {v:.4?} median {med:.4}"))
        .collect();
    report(
        9,
        "deviation probe",
        passed,
        &format!(
            "budget {PROBE_BUDGET}, {PROBE_SEEDS} seeds: {} (need <= 0.05); matrix game max improvement {stub:.5} (need <= 0.01); partners frozen: {frozen}",
            shown.join("; ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_snapshot_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut snap = RunSnapshot::new(desk());
    snap.scenario.seed = 42;
    snap.trainer.iterations = 5;
    snap.run = RunOptions {
        probe_budget: 0,
        ..RunOptions::default()
    };
    let first = run_single(&snap, &dir.path().join("original")).unwrap();
    let replay = load_snapshot(&first.snapshot).unwrap();
    let second = run_single(&replay, &dir.path().join("replay")).unwrap();
    let same = |a: &std::path::Path, b: &std::path::Path| std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    let metrics = same(&first.metrics, &second.metrics);
    let trajectory = same(&first.trajectory, &second.trajectory);
    let checkpoint = same(first.checkpoints.last().unwrap(), second.checkpoints.last().unwrap());
    let passed = metrics && trajectory && checkpoint && replay == snap;
    report(
        10,
        "snapshot replay",
        passed,
        &format!("metrics identical {metrics}, trajectory identical {trajectory}, final checkpoint identical {checkpoint}"),
    );
    assert!(passed);
}
