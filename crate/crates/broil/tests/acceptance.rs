//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion outside `KNOWN_UNATTAINABLE` fails.
//!
//! Pass substrings as arguments to run a subset, e.g.
//! `cargo test -p broil --test acceptance -- cartpole`.

use std::cell::OnceCell;
use std::path::Path;
use std::time::{Duration, Instant};

use broil::config::{ExperimentConfig, SweepConfig};
use broil::harness::{self, FrontierRow, SweepReport};
use broil_core::broil::{compute_weights, feature_reward_to_go, train, Metric, OptimizerConfig, ReturnMatrix};
use broil_core::broil::{Trajectory, TrajectoryBatch};
use broil_core::env::demos::{label_all_pairs, random_scripted_rollouts};
use broil_core::env::{Action, ActionSpace, EnvConfig, EnvKind, Environment};
use broil_core::eval::{evaluate_actor, mean_std, uniform_actor};
use broil_core::policy::{Policy, ValueNet};
use broil_core::posterior::{mcmc_infer, mean_hypothesis, McmcConfig, RewardHypothesis, RewardPosterior};
use broil_core::risk::{
    cvar, cvar_oracle, erm, rockafellar_objective, solve_sigma, value_at_risk, DiscreteDistribution, RiskParams,
};
use broil_core::rng;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Criteria that cannot hold for any correct implementation; they are still
/// run and reported, but do not fail the suite. See the README.
const KNOWN_UNATTAINABLE: [&str; 1] = ["erm-limits"];

const ALPHAS: [f64; 5] = [0.0, 0.5, 0.9, 0.95, 0.99];
const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn under(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn corpus(size: usize) -> Vec<DiscreteDistribution> {
    let mut rng = rng::seeded(2024);
    (0..size)
        .map(|_| {
            let n = rng.random_range(2..=20);
            let values = (0..n).map(|_| rng.random_range(-100.0..=100.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            DiscreteDistribution::new(values, raw.iter().map(|r| r / total).collect()).unwrap()
        })
        .collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn risk_core() -> Verdict {
    let start = Instant::now();
    let mut rng = rng::seeded(7);
    let (mut worst_oracle, mut checks, mut failures) = (0.0f64, 0usize, Vec::new());
    let mut worst_order = f64::NEG_INFINITY;
    for (k, d) in corpus(1000).iter().enumerate() {
        for alpha in ALPHAS {
            let c = cvar(d, alpha).unwrap().value;
            let gap = (c - cvar_oracle(d, alpha).unwrap()).abs();
            worst_oracle = worst_oracle.max(gap);
            let shift = rng.random_range(-50.0..50.0);
            let scale = rng.random_range(0.01..10.0);
            let shifted = cvar(&d.map(|x| x + shift).unwrap(), alpha).unwrap().value;
            let scaled = cvar(&d.map(|x| x * scale).unwrap(), alpha).unwrap().value;
            let var = value_at_risk(d, alpha).unwrap();
            // at alpha = 0 cvar and mean agree up to summation order
            let slack = 1e-12 * c.abs().max(1.0);
            worst_order = worst_order.max(c - var).max(c - d.mean());
            let ok = gap <= 1e-9
                && c <= var + slack
                && c <= d.mean() + slack
                && rel_close(shifted, c + shift, 1e-9)
                && rel_close(scaled, c * scale, 1e-9);
            checks += 1;
            if !ok {
                failures.push((k, alpha));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures.is_empty() && under(elapsed, 5),
        format!(
            "{checks} (distribution, alpha) cases, {} violations, max |cvar - oracle| = {worst_oracle:.1e}, \
             max(cvar - min(VaR, mean)) = {worst_order:.1e}, {}",
            failures.len(),
            secs(elapsed)
        ),
    )
}

fn sigma_star() -> Verdict {
    let mut bad_member = 0;
    let mut worst_plug: f64 = 0.0;
    let mut worst_grid_excess = f64::NEG_INFINITY;
    for d in corpus(1000) {
        let (lo, hi) = (d.min(), d.max());
        for alpha in ALPHAS {
            let sigma = solve_sigma(d.values(), d.probs(), alpha).unwrap();
            if !d.values().contains(&sigma) {
                bad_member += 1;
            }
            let c = cvar(&d, alpha).unwrap().value;
            worst_plug = worst_plug.max((rockafellar_objective(&d, alpha, sigma) - c).abs());
            let atom_max = d.values().iter().map(|&s| rockafellar_objective(&d, alpha, s)).fold(f64::MIN, f64::max);
            let grid_max = (0..=10_000)
                .map(|i| rockafellar_objective(&d, alpha, lo + (hi - lo) * i as f64 / 10_000.0))
                .fold(f64::MIN, f64::max);
            worst_grid_excess = worst_grid_excess.max(grid_max - atom_max);
        }
    }
    verdict(
        bad_member == 0 && worst_plug <= 1e-12 && worst_grid_excess <= 1e-9,
        format!(
            "{bad_member} non-atom sigma*, max |objective(sigma*) - cvar| = {worst_plug:.1e}, max(grid max - atom max) = {worst_grid_excess:.1e}"
        ),
    )
}

fn erm_limits() -> Verdict {
    let (mut worst_mean, mut worst_min) = (0.0f64, 0.0f64);
    let (mut mean_fail, mut min_fail, mut n) = (0, 0, 0);
    let mut worst_min_atom_prob = 1.0f64;
    for d in corpus(1000) {
        if d.max() - d.min() < 1e-3 {
            continue;
        }
        n += 1;
        let near_mean = (erm(&d, 1e-9).unwrap() - d.mean()).abs();
        let near_min = (erm(&d, 1e6).unwrap() - d.min()).abs();
        worst_mean = worst_mean.max(near_mean);
        if near_min > worst_min {
            worst_min = near_min;
            let i = d.values().iter().position(|&x| x == d.min()).unwrap();
            worst_min_atom_prob = d.probs()[i];
        }
        mean_fail += (near_mean > 1e-6) as usize;
        min_fail += (near_min > 1e-6) as usize;
    }
    verdict(
        mean_fail == 0 && min_fail == 0,
        format!(
            "{n} distributions: |erm(1e-9) - mean| max {worst_mean:.2e} ({mean_fail} over 1e-6); \
             |erm(1e6) - min| max {worst_min:.2e} ({min_fail} over 1e-6, worst has P(min) = {worst_min_atom_prob:.2e}); \
             exact offsets are ~alpha Var/2 and ~ln(1/P(min))/alpha"
        ),
    )
}

fn central_difference(params: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    const EPS: f64 = 1e-5;
    (0..params.len())
        .map(|k| {
            let orig = params[k];
            params[k] = orig + EPS;
            let up = f(params);
            params[k] = orig - EPS;
            let down = f(params);
            params[k] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-6)
}

fn normals(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn policy_gradient_error(space: ActionSpace, rng: &mut rng::Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let obs_dim = rng.random_range(1..8);
        let hidden = [rng.random_range(2..24), rng.random_range(2..24)];
        let init = Policy::new(obs_dim, space, &hidden, &mut rng::seeded(draw)).unwrap();
        let mut params: Vec<f64> = init.params().iter().map(|p| p + 0.3 * normals(rng, 1)[0]).collect();
        let policy = Policy::from_params(obs_dim, space, &hidden, params.clone()).unwrap();
        let obs = normals(rng, obs_dim);
        let action = policy.sample_action(&obs, rng).unwrap().0;
        let analytic = policy.log_prob_grad(&obs, &action).unwrap();
        let numeric = central_difference(&mut params, |p| {
            Policy::from_params(obs_dim, space, &hidden, p.to_vec()).unwrap().log_prob(&obs, &action).unwrap()
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn value_gradient_error(rng: &mut rng::Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let obs_dim = rng.random_range(1..8);
        let heads = rng.random_range(1..8);
        let hidden = [rng.random_range(2..24), rng.random_range(2..24)];
        let net = ValueNet::new(obs_dim, heads, &hidden, &mut rng::seeded(draw)).unwrap();
        let mut params = net.params().to_vec();
        let obs = normals(rng, obs_dim);
        let target = normals(rng, heads);
        let analytic = net.value_grad(&obs, &target).unwrap();
        let numeric = central_difference(&mut params, |p| {
            let v = ValueNet::from_params(obs_dim, heads, &hidden, p.to_vec()).unwrap().value_forward(&obs).unwrap();
            v.iter().zip(&target).map(|(v, t)| 0.5 * (v - t) * (v - t)).sum()
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut rng = rng::seeded(31);
    let categorical = policy_gradient_error(ActionSpace::Discrete(4), &mut rng);
    let gaussian = policy_gradient_error(ActionSpace::Continuous(2), &mut rng);
    let value = value_gradient_error(&mut rng);
    let elapsed = start.elapsed();
    verdict(
        categorical.max(gaussian).max(value) < 1e-4 && under(elapsed, 30),
        format!(
            "max relative error: categorical {categorical:.1e}, gaussian {gaussian:.1e}, value {value:.1e}; {}",
            secs(elapsed)
        ),
    )
}

fn random_batch(rng: &mut rng::Rng, k: usize) -> TrajectoryBatch {
    let trajectories = (0..rng.random_range(1..6))
        .map(|_| {
            let len = rng.random_range(1..20);
            Trajectory {
                observations: (0..len).map(|_| normals(rng, 2)).collect(),
                actions: (0..len).map(|_| Action::Discrete(rng.random_range(0..2))).collect(),
                log_probs: vec![-std::f64::consts::LN_2; len],
                features: (0..len).map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect()).collect(),
                final_observation: normals(rng, 2),
                terminated: rng.random_bool(0.5),
            }
        })
        .collect();
    TrajectoryBatch { trajectories, budget: 0 }
}

fn lambda_one() -> Verdict {
    let mut rng = rng::seeded(41);
    let mut mismatches = 0;
    for _ in 0..200 {
        let (n, k) = (rng.random_range(1..10), rng.random_range(1..5));
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let hypotheses = raw
            .iter()
            .map(|p| RewardHypothesis { weights: (0..k).map(|_| rng.random_range(-3.0..3.0)).collect(), prob: p / total })
            .collect();
        let post = RewardPosterior::new((0..k).map(|i| format!("f{i}")).collect(), hypotheses).unwrap();
        let phi = feature_reward_to_go(&random_batch(&mut rng, k));
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let matrix = |rho: Vec<f64>| ReturnMatrix { per_traj_returns: vec![rho.clone()], rho, baseline_regret_rho: None };
        let risk = RiskParams::cvar(rng.random_range(0.0..0.99), 1.0).unwrap();
        let full = compute_weights(&phi, &post, &matrix(rho), &risk, Metric::ExpectedReturn).unwrap();
        let mean = compute_weights(&phi, &post.collapse_to_mean(), &matrix(vec![0.0]), &risk, Metric::ExpectedReturn)
            .unwrap();
        mismatches += (full.per_step != mean.per_step) as usize;
    }

    let prior = harness::cartpole_prior();
    let cfg = OptimizerConfig {
        epochs: 3,
        policy_lr: 1e-2,
        risk: RiskParams::cvar(0.95, 1.0).unwrap(),
        seed: 5,
        ..OptimizerConfig::default()
    };
    let run = |p: &RewardPosterior| {
        let mut env = EnvConfig::default_for(EnvKind::CartPole).build().unwrap();
        train(&cfg, &mut env, p, None).unwrap()
    };
    let (full, mean) = (run(&prior), run(&prior.collapse_to_mean()));
    let identical = full.policy.params() == mean.policy.params() && full.value.as_ref().map(|v| v.params()) == mean.value.as_ref().map(|v| v.params());
    verdict(
        mismatches == 0 && identical,
        format!("{mismatches}/200 random batches differ; 3-epoch CartPole parameters bit-identical: {identical}"),
    )
}

fn run_sweep(config: &ExperimentConfig) -> SweepReport {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config.clone();
    config.output_dir = dir.path().to_path_buf();
    harness::sweep(&config, |r| eprintln!("  finished {}", r.cell.tag())).unwrap()
}

fn preset(kind: EnvKind, lambdas: &[f64], alpha: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(kind);
    c.sweep = SweepConfig { lambdas: lambdas.to_vec(), alphas: vec![alpha], seeds: SEEDS.to_vec() };
    c
}

fn stats(rows: &[FrontierRow], lambda: f64, alpha: f64, f: impl Fn(&FrontierRow) -> f64) -> (f64, f64) {
    let v: Vec<f64> = rows.iter().filter(|r| r.cell.lambda == lambda && r.cell.alpha == alpha).map(f).collect();
    assert_eq!(v.len(), SEEDS.len());
    mean_std(&v)
}

fn cartpole_frontier() -> Verdict {
    let start = Instant::now();
    let report = run_sweep(&preset(EnvKind::CartPole, &[0.2, 1.0], 0.95));
    let rows = &report.rows;
    let cvar_robust = stats(rows, 0.2, 0.95, |r| r.risk_value).0;
    let cvar_neutral = stats(rows, 1.0, 0.95, |r| r.risk_value).0;
    let ret_robust = stats(rows, 0.2, 0.95, |r| r.exp_return).0;
    let ret_neutral = stats(rows, 1.0, 0.95, |r| r.exp_return).0;
    let elapsed = start.elapsed();
    verdict(
        cvar_robust > cvar_neutral && ret_neutral > ret_robust,
        format!(
            "CVaR: lambda 0.2 {cvar_robust:.3} vs lambda 1 {cvar_neutral:.3}; E[return]: lambda 1 {ret_neutral:.3} vs lambda 0.2 {ret_robust:.3}; {} (target 15 min)",
            secs(elapsed)
        ),
    )
}

struct PointmassRuns {
    main: SweepReport,
    low_alpha: SweepReport,
    main_time: Duration,
}

fn pointmass_runs() -> PointmassRuns {
    let start = Instant::now();
    let main = run_sweep(&preset(EnvKind::Pointmass, &[0.2, 1.0], 0.96));
    let main_time = start.elapsed();
    let low_alpha = run_sweep(&preset(EnvKind::Pointmass, &[0.2], 0.5));
    PointmassRuns { main, low_alpha, main_time }
}

fn gray(r: &FrontierRow) -> f64 {
    r.gray_steps.unwrap()
}

fn pointmass_ordering(runs: &PointmassRuns) -> Verdict {
    let robust = stats(&runs.main.rows, 0.2, 0.96, gray).0;
    let neutral = stats(&runs.main.rows, 1.0, 0.96, gray).0;
    verdict(
        robust <= 0.5 * neutral,
        format!(
            "mean gray steps: lambda 0.2 {robust:.3} vs lambda 1 {neutral:.3}; {} (target 45 min)",
            secs(runs.main_time)
        ),
    )
}

fn alpha_sensitivity(runs: &PointmassRuns) -> Verdict {
    let (nm, ns) = stats(&runs.main.rows, 1.0, 0.96, gray);
    let (hm, hs) = stats(&runs.main.rows, 0.2, 0.96, gray);
    let (lm, ls) = stats(&runs.low_alpha.rows, 0.2, 0.5, gray);
    let overlap = |a: (f64, f64), b: (f64, f64)| a.0 - a.1 <= b.0 + b.1 && b.0 - b.1 <= a.0 + a.1;
    let low_matches = overlap((lm, ls), (nm, ns));
    let high_lower = hm < nm && !overlap((hm, hs), (nm, ns));
    verdict(
        low_matches && high_lower,
        format!(
            "gray steps mean ± std: lambda 1 {nm:.2} ± {ns:.2}; lambda 0.2 alpha 0.5 {lm:.2} ± {ls:.2}; lambda 0.2 alpha 0.96 {hm:.2} ± {hs:.2}"
        ),
    )
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn preference_inference() -> Verdict {
    let start = Instant::now();
    let w_star = [-0.5, 0.0, 0.5];
    let names: Vec<String> = ["gray", "white", "trash"].iter().map(|s| s.to_string()).collect();
    let cosines: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let data = label_all_pairs(random_scripted_rollouts(20, seed).unwrap(), &w_star).unwrap();
            let post = mcmc_infer(&data, &McmcConfig { seed, ..McmcConfig::default() }, names.clone()).unwrap();
            cosine(&mean_hypothesis(&post), &w_star)
        })
        .collect();
    let elapsed = start.elapsed();
    verdict(
        cosines.iter().all(|&c| c > 0.9) && under(elapsed, 120),
        format!("posterior-mean cosine with w* per seed {cosines:.3?}; {}", secs(elapsed)),
    )
}

fn trashbot() -> Verdict {
    let start = Instant::now();
    let config = preset(EnvKind::TrashBot, &[0.8], 0.95);
    let report = run_sweep(&config);
    let trained_trash = stats(&report.rows, 0.8, 0.95, |r| r.trash.unwrap()).0;
    let trained_gray = stats(&report.rows, 0.8, 0.95, gray).0;
    let elapsed = start.elapsed();

    let mut env = config.env.build().unwrap();
    let bound = match &config.env {
        EnvConfig::TrashBot(c) => c.max_force,
        _ => unreachable!(),
    };
    let post = RewardPosterior::uniform(env.feature_names(), vec![vec![0.0; 3]]).unwrap();
    let risk = RiskParams::cvar(0.95, 0.8).unwrap();
    let random: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let actor = uniform_actor(env.action_space(), bound);
            let ev = evaluate_actor(&mut env, &post, &risk, config.evaluation.episodes, seed, None, actor).unwrap();
            ev.metrics.trash.unwrap()
        })
        .collect();
    let random_trash = mean_std(&random).0;
    verdict(
        trained_trash >= 4.0 * random_trash && trained_gray < 1.0,
        format!(
            "trash per episode {trained_trash:.3} vs uniform random {random_trash:.3} ({:.1}x); gray steps {trained_gray:.3}; {} (target 45 min)",
            trained_trash / random_trash,
            secs(elapsed)
        ),
    )
}

fn quick(kind: EnvKind, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(kind);
    c.output_dir = dir.to_path_buf();
    c.optimizer.epochs = 3;
    c.evaluation.episodes = 20;
    c.sweep = SweepConfig { lambdas: vec![0.0, 0.5, 1.0], alphas: vec![c.optimizer.risk.alpha], seeds: vec![0, 1] };
    c
}

fn determinism() -> Verdict {
    let mut differing = Vec::new();
    for kind in [EnvKind::CartPole, EnvKind::Pointmass, EnvKind::TrashBot] {
        let bodies: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                harness::sweep(&quick(kind, dir.path()), |_| {}).unwrap();
                std::fs::read(dir.path().join("frontier.csv")).unwrap()
            })
            .collect();
        if bodies[0] != bodies[1] {
            differing.push(kind.name());
        }
    }
    verdict(
        differing.is_empty(),
        format!("repeated 6-cell sweeps on cartpole, pointmass, trashbot; differing frontier.csv: {differing:?}"),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let pointmass = OnceCell::new();
    let pointmass_runs_once = || pointmass.get_or_init(pointmass_runs);
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut record = |name: &'static str, run: &mut dyn FnMut() -> Verdict| {
        if wanted(name) {
            eprintln!("running {name}");
            let v = run();
            println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            results.push((name, v));
        }
    };
    record("risk-core-exactness", &mut risk_core);
    record("sigma-star", &mut sigma_star);
    record("erm-limits", &mut erm_limits);
    record("gradient-fidelity", &mut gradient_fidelity);
    record("lambda-one-equivalence", &mut lambda_one);
    record("cartpole-frontier", &mut cartpole_frontier);
    record("pointmass-risk-ordering", &mut || pointmass_ordering(pointmass_runs_once()));
    record("alpha-sensitivity", &mut || alpha_sensitivity(pointmass_runs_once()));
    record("preference-inference", &mut preference_inference);
    record("trashbot-directional", &mut trashbot);
    record("determinism", &mut determinism);

    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    let unexpected: Vec<&str> = failed.iter().copied().filter(|n| !KNOWN_UNATTAINABLE.contains(n)).collect();
    println!(
        "{} of {} criteria passed; failing: {failed:?}; known unattainable: {KNOWN_UNATTAINABLE:?}",
        results.len() - failed.len(),
        results.len()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
