//! Soft-robust policy gradient: vanilla and PPO-clip variants.
//!
//! Each epoch collects on-policy episodes, scores them under every reward
//! hypothesis, turns the blend `λ E[ρ] + (1 - λ) Risk[ρ]` into per-hypothesis
//! coefficients, and ascends the resulting weighted policy gradient.

mod batch;
mod update;
mod weights;

use alloc::vec::Vec;

pub use batch::{
    collect_batch, estimate_demonstrator_returns, estimate_returns, rollout_with, ReturnMatrix, Trajectory,
    TrajectoryBatch,
};
pub use update::{fit_value, policy_gradient, ppo_update, vanilla_update, PpoSettings, UpdateStats};
pub use weights::{
    compute_weights, discounted_reward_to_go, feature_reward_to_go, gae_advantages, hypothesis_coefficients,
    metric_rho, standardize_per_hypothesis, Coefficients, Metric, Phi, Weights,
};

use crate::env::{EnvMetrics, Environment};
use crate::error::bail;
use crate::policy::{Adam, Policy, ValueNet, DEFAULT_HIDDEN};
use crate::posterior::{PreferenceDataset, RewardPosterior};
use crate::risk::{DiscreteDistribution, RiskParams};
use crate::{rng, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Algorithm {
    /// REINFORCE with feature reward-to-go and no baseline.
    #[default]
    Vanilla,
    Ppo,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OptimizerConfig {
    pub risk: RiskParams,
    pub metric: Metric,
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub target_kl: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub policy_iters: usize,
    pub value_iters: usize,
    /// PPO minibatch size in steps; unset means full-batch steps.
    pub minibatch: Option<usize>,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            risk: RiskParams { alpha: 0.95, lambda: 1.0, measure: Default::default() },
            metric: Metric::ExpectedReturn,
            algorithm: Algorithm::Vanilla,
            epochs: 50,
            steps_per_epoch: 4000,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            target_kl: 0.01,
            policy_lr: 2e-4,
            value_lr: 1e-3,
            policy_iters: 80,
            value_iters: 80,
            minibatch: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        if self.steps_per_epoch == 0 {
            bail!(Param, "steps per epoch must be positive");
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                bail!(Param, "{name} must lie in [0, 1], got {v}");
            }
        }
        for (name, v) in [
            ("clip_ratio", self.clip_ratio),
            ("target_kl", self.target_kl),
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bail!(Param, "{name} must be positive, got {v}");
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bail!(Param, "hidden layer sizes must be positive");
        }
        if self.minibatch == Some(0) {
            bail!(Param, "minibatch size must be positive");
        }
        Ok(())
    }

    pub fn ppo_settings(&self) -> PpoSettings {
        PpoSettings {
            clip_ratio: self.clip_ratio,
            target_kl: self.target_kl,
            policy_iters: self.policy_iters,
            value_iters: self.value_iters,
            minibatch: self.minibatch,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub episodes: usize,
    /// Batch-mean return under each hypothesis.
    pub rho: Vec<f64>,
    /// `E_posterior[ρ]`.
    pub expected_return: f64,
    /// Configured risk measure of the metric's return vector.
    pub risk_value: f64,
    pub sigma_star: Option<f64>,
    pub metrics: EnvMetrics,
    pub stats: UpdateStats,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: Policy,
    pub value: Option<ValueNet>,
    pub log: Vec<EpochLog>,
}

/// Run the optimizer. `demos` is required exactly when the metric is
/// baseline regret.
pub fn train<E: Environment + ?Sized>(
    config: &OptimizerConfig,
    env: &mut E,
    posterior: &RewardPosterior,
    demos: Option<&PreferenceDataset>,
) -> Result<TrainOutput> {
    train_with(config, env, posterior, demos, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with<E: Environment + ?Sized>(
    config: &OptimizerConfig,
    env: &mut E,
    posterior: &RewardPosterior,
    demos: Option<&PreferenceDataset>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutput> {
    config.validate()?;
    if env.feature_dim() != posterior.feature_dim() {
        bail!(Data, "environment has {} features, posterior has {}", env.feature_dim(), posterior.feature_dim());
    }
    let demo_returns = match (config.metric, demos) {
        (Metric::BaselineRegret, Some(d)) => Some(estimate_demonstrator_returns(d, posterior)?),
        (Metric::BaselineRegret, None) => bail!(Usage, "baseline regret needs demonstrations"),
        (Metric::ExpectedReturn, Some(_)) => bail!(Usage, "demonstrations are only used with baseline regret"),
        (Metric::ExpectedReturn, None) => None,
    };

    let seed = config.seed;
    let obs_dim = env.observation_dim();
    let mut policy = Policy::new(obs_dim, env.action_space(), &config.hidden, &mut rng::stream(seed, rng::Stream::PolicyInit))?;
    let mut policy_opt = Adam::new(policy.num_params(), config.policy_lr);
    let mut value = match config.algorithm {
        Algorithm::Ppo => Some(ValueNet::new(
            obs_dim,
            posterior.len(),
            &config.hidden,
            &mut rng::stream(seed, rng::Stream::ValueInit),
        )?),
        Algorithm::Vanilla => None,
    };
    let mut value_opt = value.as_ref().map(|v| Adam::new(v.params().len(), config.value_lr));
    let mut episode_rng = rng::stream(seed, rng::Stream::EpisodeSeeds);
    let mut action_rng = rng::stream(seed, rng::Stream::ActionSampling);
    let mut minibatch_rng = rng::stream(seed, rng::Stream::Minibatch);
    let probs = posterior.probs();

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batch = collect_batch(env, &policy, config.steps_per_epoch, &mut episode_rng, &mut action_rng)?;
        let mut returns = estimate_returns(&batch, posterior)?;
        if let Some(d) = &demo_returns {
            returns = returns.with_demonstrator(d)?;
        }
        let (weights, stats) = match (&mut value, &mut value_opt) {
            (Some(v), Some(v_opt)) => {
                let mut adv = gae_advantages(&batch, posterior, v, config.gamma, config.gae_lambda)?;
                standardize_per_hypothesis(&mut adv);
                let targets = discounted_reward_to_go(&batch, posterior, Some(v), config.gamma)?;
                let weights = compute_weights(&Phi::PerHypothesis(adv), posterior, &returns, &config.risk, config.metric)?;
                let stats = ppo_update(
                    &mut policy,
                    &mut policy_opt,
                    v,
                    v_opt,
                    &batch,
                    &weights.per_step,
                    &targets,
                    &config.ppo_settings(),
                    &mut minibatch_rng,
                )?;
                (weights, stats)
            }
            _ => {
                let phi = feature_reward_to_go(&batch);
                let weights = compute_weights(&phi, posterior, &returns, &config.risk, config.metric)?;
                let stats = vanilla_update(&mut policy, &mut policy_opt, &batch, &weights.per_step)?;
                (weights, stats)
            }
        };

        let metric_values = metric_rho(&returns, config.metric)?;
        let dist = DiscreteDistribution::new(metric_values.to_vec(), probs.clone())?;
        let row = EpochLog {
            epoch,
            steps: batch.total_steps(),
            episodes: batch.len(),
            expected_return: probs.iter().zip(&returns.rho).map(|(p, r)| p * r).sum(),
            risk_value: config.risk.evaluate(&dist)?,
            rho: returns.rho,
            sigma_star: weights.coefficients.sigma_star,
            metrics: env.metrics(&batch.episode_features()),
            stats,
        };
        on_epoch(&row);
        log.push(row);
    }
    Ok(TrainOutput { policy, value, log })
}
