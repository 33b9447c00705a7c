//! Posterior construction, single runs and parallel λ/α sweeps.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use broil_core::broil::{train_with, EpochLog, Metric, OptimizerConfig};
use broil_core::env::demos::{scripted_demos, DemoVariant};
use broil_core::env::{EnvConfig, EnvKind, Environment};
use broil_core::eval::{evaluate, mean_std, Evaluation};
use broil_core::policy::{Policy, ValueNet};
use broil_core::posterior::{map_hypothesis, run_chain, PreferenceDataset, RewardHypothesis, RewardPosterior};
use rayon::prelude::*;

use crate::config::{Cell, Collapse, ExperimentConfig, PosteriorConfig, PosteriorSource};
use crate::error::{at_startup, HarnessError, Result};
use crate::io::{self, fmt_opt, Checkpoint};

pub const CARTPOLE_PRIOR: [f64; 7] = [-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2];
pub const POINTMASS_B: [f64; 5] = [-500.0, -40.0, 0.0, 40.0, 50.0];
pub const POINTMASS_PROBS: [f64; 5] = [0.05, 0.05, 0.2, 0.3, 0.4];

/// Uniform prior over cart-position penalties `b · x`.
pub fn cartpole_prior() -> RewardPosterior {
    RewardPosterior::uniform(vec!["x".into()], CARTPOLE_PRIOR.iter().map(|b| vec![*b]).collect())
        .expect("valid prior")
}

/// Gray-region table: hypothesis `b` rewards `-|p - goal|^2 + b · 1_gray`.
pub fn pointmass_table() -> RewardPosterior {
    let hypotheses = POINTMASS_B
        .iter()
        .zip(POINTMASS_PROBS)
        .map(|(b, prob)| RewardHypothesis { weights: vec![1.0, *b], prob })
        .collect();
    RewardPosterior::new(vec!["neg_sq_dist".into(), "gray".into()], hypotheses).expect("valid table")
}

/// Posterior ready for training, plus the preference data it came from.
#[derive(Debug, Clone)]
pub struct BuiltPosterior {
    pub posterior: RewardPosterior,
    pub preferences: Option<PreferenceDataset>,
}

fn from_preferences(data: PreferenceDataset, names: Vec<String>, cfg: &PosteriorConfig) -> Result<BuiltPosterior> {
    let chain = run_chain(&data, &cfg.mcmc)?;
    let posterior = match cfg.collapse {
        Collapse::Map => RewardPosterior::new(names, vec![map_hypothesis(&chain)?])?,
        Collapse::Mean => {
            RewardPosterior::uniform(names, chain.thinned(cfg.mcmc.burn_in, cfg.mcmc.downsample_to)?)?.collapse_to_mean()
        }
        Collapse::None => RewardPosterior::uniform(names, chain.thinned(cfg.mcmc.burn_in, cfg.mcmc.downsample_to)?)?,
    };
    Ok(BuiltPosterior { posterior, preferences: Some(data) })
}

fn collapse(posterior: RewardPosterior, how: Collapse) -> Result<RewardPosterior> {
    Ok(match how {
        Collapse::None => posterior,
        Collapse::Mean => posterior.collapse_to_mean(),
        Collapse::Map => {
            let mut best = &posterior.hypotheses()[0];
            for h in posterior.hypotheses() {
                if h.prob > best.prob {
                    best = h;
                }
            }
            let weights = best.weights.clone();
            RewardPosterior::new(posterior.feature_names().to_vec(), vec![RewardHypothesis { weights, prob: 1.0 }])?
        }
    })
}

/// Build the posterior described by `cfg` for environment `env`.
pub fn build_posterior(cfg: &PosteriorConfig, env: &EnvConfig) -> Result<BuiltPosterior> {
    cfg.validate()?;
    let names = env.build()?.feature_names();
    let plain = |posterior| -> Result<BuiltPosterior> {
        Ok(BuiltPosterior { posterior: collapse(posterior, cfg.collapse)?, preferences: None })
    };
    let built = match cfg.source {
        PosteriorSource::Preset => match env.kind() {
            EnvKind::CartPole => plain(cartpole_prior())?,
            EnvKind::Pointmass => plain(pointmass_table())?,
            EnvKind::TrashBot => {
                let data = scripted_demos(EnvKind::TrashBot, DemoVariant::All, 0)?;
                from_preferences(data, names.clone(), cfg)?
            }
        },
        PosteriorSource::Table => {
            let mut hypotheses = cfg.hypotheses.clone().expect("validated");
            let total: f64 = hypotheses.iter().map(|h| h.prob).sum();
            hypotheses.iter_mut().for_each(|h| h.prob /= total);
            plain(RewardPosterior::new(cfg.feature_names.clone().unwrap_or_else(|| names.clone()), hypotheses)?)?
        }
        PosteriorSource::File => plain(io::read_posterior(cfg.path.as_deref().expect("validated"))?)?,
        PosteriorSource::Preferences => {
            let (data, file_names) = match (&cfg.path, &cfg.demos) {
                (Some(p), _) => io::read_preferences(p)?,
                (None, Some(d)) => (scripted_demos(env.kind(), d.variant, d.seed)?, names.clone()),
                (None, None) => unreachable!("validated"),
            };
            from_preferences(data, file_names, cfg)?
        }
    };
    if built.posterior.feature_dim() != names.len() {
        return Err(HarnessError::config(format!(
            "posterior has {} features, {} environment has {}",
            built.posterior.feature_dim(),
            env.kind().name(),
            names.len()
        )));
    }
    Ok(built)
}

/// Validated config with its posterior built and output directory created.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub posterior: RewardPosterior,
    pub demos: Option<PreferenceDataset>,
}

/// Everything that can fail before training starts.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    at_startup((|| {
        config.validate()?;
        let built = build_posterior(&config.posterior, &config.env)?;
        let demos = match config.optimizer.metric {
            Metric::ExpectedReturn => None,
            Metric::BaselineRegret => match built.preferences {
                Some(d) => Some(d),
                None => return Err(HarnessError::config("baseline regret needs a preference-based posterior")),
            },
        };
        if let Some(gt) = &config.evaluation.ground_truth {
            if gt.len() != built.posterior.feature_dim() {
                return Err(HarnessError::config("ground-truth weights do not match the feature count"));
            }
        }
        let out = &config.output_dir;
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let probe = out.join(".write-test");
        std::fs::write(&probe, b"").map_err(|e| HarnessError::io(out, e))?;
        let _ = std::fs::remove_file(&probe);
        Ok(Prepared { config: config.clone(), posterior: built.posterior, demos })
    })())
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub evaluation: Evaluation,
    pub log: Vec<EpochLog>,
    pub policy: Policy,
    pub value: Option<ValueNet>,
}

impl CellResult {
    pub fn row(&self) -> FrontierRow {
        let e = &self.evaluation;
        FrontierRow {
            cell: self.cell,
            exp_return: e.expected_return,
            risk_value: e.risk_value,
            gray_steps: e.metrics.gray_steps,
            trash: e.metrics.trash,
            abs_x_mean: e.metrics.abs_x_mean,
            ground_truth: e.ground_truth,
            rho: e.rho.clone(),
        }
    }
}

pub fn optimizer_for(base: &OptimizerConfig, cell: Cell) -> OptimizerConfig {
    let mut cfg = base.clone();
    cfg.risk.lambda = cell.lambda;
    cfg.risk.alpha = cell.alpha;
    cfg.seed = cell.seed;
    cfg
}

/// Train and evaluate one cell. Evaluation draws from its own stream of the
/// cell seed, independent of every training stream.
pub fn run_cell(prepared: &Prepared, cell: Cell, on_epoch: impl FnMut(&EpochLog)) -> Result<CellResult> {
    let config = &prepared.config;
    let opt = optimizer_for(&config.optimizer, cell);
    let mut env = config.env.build()?;
    let out = train_with(&opt, &mut env, &prepared.posterior, prepared.demos.as_ref(), on_epoch)?;
    let evaluation = evaluate(
        &out.policy,
        &mut env,
        &prepared.posterior,
        &opt.risk,
        config.evaluation.episodes,
        cell.seed,
        config.evaluation.ground_truth.as_deref(),
    )?;
    Ok(CellResult { cell, evaluation, log: out.log, policy: out.policy, value: out.value })
}

/// One per-seed line of the frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRow {
    pub cell: Cell,
    pub exp_return: f64,
    pub risk_value: f64,
    pub gray_steps: Option<f64>,
    pub trash: Option<f64>,
    pub abs_x_mean: Option<f64>,
    pub ground_truth: Option<f64>,
    pub rho: Vec<f64>,
}

/// Mean and sample standard deviation across seeds for one `(λ, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub lambda: f64,
    pub alpha: f64,
    pub seeds: usize,
    pub exp_return: (f64, f64),
    pub risk_value: (f64, f64),
    pub gray_steps: Option<(f64, f64)>,
    pub trash: Option<(f64, f64)>,
    pub abs_x_mean: Option<(f64, f64)>,
    pub ground_truth: Option<(f64, f64)>,
}

fn opt_mean_std(rows: &[&FrontierRow], f: impl Fn(&FrontierRow) -> Option<f64>) -> Option<(f64, f64)> {
    let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
    v.map(|v| mean_std(&v))
}

/// Group rows by `(λ, α)` in first-appearance order.
pub fn aggregate(rows: &[FrontierRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        let k = (r.cell.lambda, r.cell.alpha);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(lambda, alpha)| {
            let group: Vec<&FrontierRow> =
                rows.iter().filter(|r| r.cell.lambda == lambda && r.cell.alpha == alpha).collect();
            AggregateRow {
                lambda,
                alpha,
                seeds: group.len(),
                exp_return: mean_std(&group.iter().map(|r| r.exp_return).collect::<Vec<_>>()),
                risk_value: mean_std(&group.iter().map(|r| r.risk_value).collect::<Vec<_>>()),
                gray_steps: opt_mean_std(&group, |r| r.gray_steps),
                trash: opt_mean_std(&group, |r| r.trash),
                abs_x_mean: opt_mean_std(&group, |r| r.abs_x_mean),
                ground_truth: opt_mean_std(&group, |r| r.ground_truth),
            }
        })
        .collect()
}

pub const FRONTIER_HEADER: [&str; 8] =
    ["lambda", "alpha", "seed", "exp_return", "risk_value", "gray_steps", "trash", "|x|_mean"];

pub fn frontier_csv(rows: &[FrontierRow]) -> Result<Vec<u8>> {
    io::table_csv(
        &FRONTIER_HEADER,
        rows.iter().map(|r| {
            vec![
                r.cell.lambda.to_string(),
                r.cell.alpha.to_string(),
                r.cell.seed.to_string(),
                r.exp_return.to_string(),
                r.risk_value.to_string(),
                fmt_opt(r.gray_steps),
                fmt_opt(r.trash),
                fmt_opt(r.abs_x_mean),
            ]
        }),
    )
}

pub fn summary_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let pair = |p: Option<(f64, f64)>| [fmt_opt(p.map(|p| p.0)), fmt_opt(p.map(|p| p.1))];
    io::table_csv(
        &[
            "lambda",
            "alpha",
            "n_seeds",
            "exp_return_mean",
            "exp_return_std",
            "risk_value_mean",
            "risk_value_std",
            "gray_steps_mean",
            "gray_steps_std",
            "trash_mean",
            "trash_std",
            "|x|_mean_mean",
            "|x|_mean_std",
            "ground_truth_mean",
            "ground_truth_std",
        ],
        rows.iter().map(|r| {
            let mut row = vec![r.lambda.to_string(), r.alpha.to_string(), r.seeds.to_string()];
            row.extend(pair(Some(r.exp_return)));
            row.extend(pair(Some(r.risk_value)));
            row.extend(pair(r.gray_steps));
            row.extend(pair(r.trash));
            row.extend(pair(r.abs_x_mean));
            row.extend(pair(r.ground_truth));
            row
        }),
    )
}

/// Per-seed rows with the ground-truth return and every hypothesis return.
pub fn evaluation_csv(rows: &[FrontierRow]) -> Result<Vec<u8>> {
    let n = rows.first().map_or(0, |r| r.rho.len());
    let mut header: Vec<String> =
        ["lambda", "alpha", "seed", "exp_return", "risk_value", "ground_truth"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|i| format!("rho_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::table_csv(
        &header,
        rows.iter().map(|r| {
            let mut row = vec![
                r.cell.lambda.to_string(),
                r.cell.alpha.to_string(),
                r.cell.seed.to_string(),
                r.exp_return.to_string(),
                r.risk_value.to_string(),
                fmt_opt(r.ground_truth),
            ];
            row.extend(r.rho.iter().map(f64::to_string));
            row
        }),
    )
}

/// Result of a sweep, in cell order.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<FrontierRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Write one cell's training log and checkpoint.
fn write_cell(dir: &Path, kind: EnvKind, hypotheses: usize, r: &CellResult) -> Result<()> {
    let tag = r.cell.tag();
    io::write_atomic(&dir.join("logs").join(format!("{tag}.csv")), &io::training_log_csv(&r.log, hypotheses)?)?;
    Checkpoint::new(kind, &r.policy, r.value.as_ref(), r.cell.lambda, r.cell.alpha, r.cell.seed)
        .write(&dir.join("checkpoints").join(format!("{tag}.json")))
}

/// Run every cell of the sweep in parallel and write the frontier, the
/// per-seed evaluation table, the across-seed summary, per-cell logs and
/// checkpoints, the resolved config and run metadata under the output
/// directory.
pub fn sweep(config: &ExperimentConfig, progress: impl Fn(&CellResult) + Sync) -> Result<SweepReport> {
    let prepared = prepare(config)?;
    let started = unix_seconds();
    let dir = config.output_dir.clone();
    let kind = config.env.kind();
    let hypotheses = prepared.posterior.len();
    let results: Vec<Result<CellResult>> = config
        .sweep
        .cells()
        .into_par_iter()
        .map(|cell| {
            let r = run_cell(&prepared, cell, |_| {})?;
            write_cell(&dir, kind, hypotheses, &r)?;
            progress(&r);
            Ok(r)
        })
        .collect();
    let results: Vec<CellResult> = results.into_iter().collect::<Result<_>>()?;
    let rows: Vec<FrontierRow> = results.iter().map(CellResult::row).collect();
    let aggregates = aggregate(&rows);
    io::write_atomic(&dir.join("frontier.csv"), &frontier_csv(&rows)?)?;
    io::write_atomic(&dir.join("frontier_summary.csv"), &summary_csv(&aggregates)?)?;
    io::write_atomic(&dir.join("evaluation.csv"), &evaluation_csv(&rows)?)?;
    io::write_atomic(&dir.join("config.toml"), config.to_toml()?.as_bytes())?;
    io::write_posterior(&dir.join("posterior.json"), &prepared.posterior)?;
    let meta = serde_json::json!({
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "cells": rows.len(),
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    io::write_atomic(&dir.join("metadata.json"), serde_json::to_string_pretty(&meta).expect("json").as_bytes())?;
    Ok(SweepReport { rows, aggregates })
}
