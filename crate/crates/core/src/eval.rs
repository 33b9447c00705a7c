//! Evaluation rollouts of trained (or scripted) policies.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::broil::{rollout_with, Trajectory};
use crate::env::{Action, ActionSpace, EnvMetrics, Environment};
use crate::error::bail;
use crate::policy::Policy;
use crate::posterior::{dot, RewardPosterior};
use crate::risk::{DiscreteDistribution, RiskParams};
use crate::rng::{self, Rng};
use crate::Result;

/// Posterior-level summary of a set of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episodes: usize,
    /// Mean return under each hypothesis.
    pub rho: Vec<f64>,
    pub expected_return: f64,
    /// Configured risk measure of `rho`.
    pub risk_value: f64,
    pub metrics: EnvMetrics,
    /// Mean return under the ground-truth weights, if given.
    pub ground_truth: Option<f64>,
}

/// Roll out `episodes` episodes with `actor` and summarize them. Episode seeds
/// and action noise come from the evaluation stream of `seed`.
pub fn evaluate_actor<E, F>(
    env: &mut E,
    posterior: &RewardPosterior,
    risk: &RiskParams,
    episodes: usize,
    seed: u64,
    ground_truth: Option<&[f64]>,
    mut actor: F,
) -> Result<Evaluation>
where
    E: Environment + ?Sized,
    F: FnMut(&[f64], &mut Rng) -> Result<(Action, f64)>,
{
    if episodes == 0 {
        bail!(Param, "evaluation needs at least one episode");
    }
    if env.feature_dim() != posterior.feature_dim() {
        bail!(Data, "environment has {} features, posterior has {}", env.feature_dim(), posterior.feature_dim());
    }
    if let Some(w) = ground_truth {
        if w.len() != env.feature_dim() {
            bail!(Data, "ground-truth reward has {} weights for {} features", w.len(), env.feature_dim());
        }
    }
    let trajectories = rollouts(env, episodes, seed, &mut actor)?;
    let mut rho = vec![0.0; posterior.len()];
    let mut truth = 0.0;
    for traj in &trajectories {
        let mu = traj.feature_counts()?;
        for (r, x) in rho.iter_mut().zip(posterior.returns(&mu)) {
            *r += x;
        }
        if let Some(w) = ground_truth {
            truth += dot(w, &mu);
        }
    }
    let n = episodes as f64;
    rho.iter_mut().for_each(|r| *r /= n);
    let probs = posterior.probs();
    let dist = DiscreteDistribution::new(rho.clone(), probs.clone())?;
    let features: Vec<&[Vec<f64>]> = trajectories.iter().map(|t| t.features.as_slice()).collect();
    Ok(Evaluation {
        episodes,
        expected_return: probs.iter().zip(&rho).map(|(p, r)| p * r).sum(),
        risk_value: risk.evaluate(&dist)?,
        rho,
        metrics: env.metrics(&features),
        ground_truth: ground_truth.map(|_| truth / n),
    })
}

/// The evaluation episodes [`evaluate_actor`] scores, for export.
pub fn rollouts<E, F>(env: &mut E, episodes: usize, seed: u64, mut actor: F) -> Result<Vec<Trajectory>>
where
    E: Environment + ?Sized,
    F: FnMut(&[f64], &mut Rng) -> Result<(Action, f64)>,
{
    let mut rng = rng::stream(seed, rng::Stream::Evaluation);
    let mut trajectories = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let episode_seed: u64 = rng.random();
        trajectories.push(rollout_with(env, episode_seed, |obs| actor(obs, &mut rng))?);
    }
    Ok(trajectories)
}

/// Evaluate a stochastic policy.
pub fn evaluate<E: Environment + ?Sized>(
    policy: &Policy,
    env: &mut E,
    posterior: &RewardPosterior,
    risk: &RiskParams,
    episodes: usize,
    seed: u64,
    ground_truth: Option<&[f64]>,
) -> Result<Evaluation> {
    evaluate_actor(env, posterior, risk, episodes, seed, ground_truth, |obs, rng| policy.sample_action(obs, rng))
}

/// Uniformly random actions: each discrete action equally likely, continuous
/// components uniform in `[-bound, bound]`. The reported log-probability is
/// that of the uniform density.
pub fn uniform_actor(space: ActionSpace, bound: f64) -> impl FnMut(&[f64], &mut Rng) -> Result<(Action, f64)> {
    move |_, rng| {
        Ok(match space {
            ActionSpace::Discrete(n) => (Action::Discrete(rng.random_range(0..n)), -libm::log(n as f64)),
            ActionSpace::Continuous(d) => (
                Action::Continuous((0..d).map(|_| rng.random_range(-bound..=bound)).collect()),
                -(d as f64) * libm::log(2.0 * bound),
            ),
        })
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, libm::sqrt(ss / (n - 1.0)))
}
