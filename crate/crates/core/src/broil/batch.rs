use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::{Action, Environment};
use crate::error::bail;
use crate::policy::Policy;
use crate::posterior::{dot, feature_counts, PreferenceDataset, RewardPosterior};
use crate::rng::Rng;
use crate::Result;

/// One on-policy episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Observation before each step.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    /// `log π(a_t | s_t)` under the collecting policy.
    pub log_probs: Vec<f64>,
    /// Reward features of each transition.
    pub features: Vec<Vec<f64>>,
    /// Observation after the last step, used to bootstrap truncated episodes.
    pub final_observation: Vec<f64>,
    /// Ended by the environment rather than by the horizon.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn feature_counts(&self) -> Result<Vec<f64>> {
        feature_counts(&self.features)
    }
}

/// Trajectories gathered in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub trajectories: Vec<Trajectory>,
    /// Step budget the batch was collected against.
    pub budget: usize,
}

impl TrajectoryBatch {
    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Per-step features of every episode, for environment metrics.
    pub fn episode_features(&self) -> Vec<&[Vec<f64>]> {
        self.trajectories.iter().map(|t| t.features.as_slice()).collect()
    }
}

/// Run one episode with actions drawn by `act`.
pub fn rollout_with<E, F>(env: &mut E, seed: u64, mut act: F) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    F: FnMut(&[f64]) -> Result<(Action, f64)>,
{
    let mut state = env.reset(seed);
    let cap = env.horizon();
    let mut traj = Trajectory {
        observations: Vec::with_capacity(cap),
        actions: Vec::with_capacity(cap),
        log_probs: Vec::with_capacity(cap),
        features: Vec::with_capacity(cap),
        final_observation: Vec::new(),
        terminated: false,
    };
    loop {
        let (action, lp) = act(&state.observation)?;
        let next = env.step(&action)?;
        traj.observations.push(core::mem::take(&mut state.observation));
        traj.actions.push(action);
        traj.log_probs.push(lp);
        traj.features.push(next.features.clone());
        state = next;
        if state.done {
            traj.terminated = state.terminated;
            traj.final_observation = state.observation;
            return Ok(traj);
        }
    }
}

/// Collect whole episodes until at least `budget` steps have been taken.
/// Episode seeds come from `episode_rng`, action noise from `action_rng`.
pub fn collect_batch<E: Environment + ?Sized>(
    env: &mut E,
    policy: &Policy,
    budget: usize,
    episode_rng: &mut Rng,
    action_rng: &mut Rng,
) -> Result<TrajectoryBatch> {
    if budget == 0 {
        bail!(Param, "step budget must be positive");
    }
    let mut batch = TrajectoryBatch { trajectories: Vec::new(), budget };
    let mut steps = 0;
    while steps < budget {
        let seed: u64 = episode_rng.random();
        let traj = rollout_with(env, seed, |obs| policy.sample_action(obs, action_rng))?;
        steps += traj.len();
        batch.trajectories.push(traj);
    }
    Ok(batch)
}

/// Undiscounted returns of each trajectory under each hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    /// `|T| x N`.
    pub per_traj_returns: Vec<Vec<f64>>,
    /// Batch mean of each column.
    pub rho: Vec<f64>,
    /// `rho_i - rho(demonstrator, r_i)` when a demonstrator is known.
    pub baseline_regret_rho: Option<Vec<f64>>,
}

impl ReturnMatrix {
    pub fn with_demonstrator(mut self, demo_returns: &[f64]) -> Result<Self> {
        if demo_returns.len() != self.rho.len() {
            bail!(Data, "{} demonstrator returns for {} hypotheses", demo_returns.len(), self.rho.len());
        }
        self.baseline_regret_rho = Some(self.rho.iter().zip(demo_returns).map(|(r, d)| r - d).collect());
        Ok(self)
    }
}

fn check_dims(k: usize, posterior: &RewardPosterior) -> Result<()> {
    if k != posterior.feature_dim() {
        bail!(Data, "features have dimension {k}, posterior expects {}", posterior.feature_dim());
    }
    Ok(())
}

pub fn estimate_returns(batch: &TrajectoryBatch, posterior: &RewardPosterior) -> Result<ReturnMatrix> {
    if batch.is_empty() {
        bail!(Usage, "cannot estimate returns from an empty batch");
    }
    let n = posterior.len();
    let mut per_traj_returns = Vec::with_capacity(batch.len());
    let mut rho = vec![0.0; n];
    for traj in &batch.trajectories {
        let mu = traj.feature_counts()?;
        check_dims(mu.len(), posterior)?;
        let r = posterior.returns(&mu);
        for (acc, x) in rho.iter_mut().zip(&r) {
            *acc += x;
        }
        per_traj_returns.push(r);
    }
    let count = batch.len() as f64;
    rho.iter_mut().for_each(|r| *r /= count);
    Ok(ReturnMatrix { per_traj_returns, rho, baseline_regret_rho: None })
}

/// `w_i · mu_E` with `mu_E` the mean demonstration feature counts.
pub fn estimate_demonstrator_returns(demos: &PreferenceDataset, posterior: &RewardPosterior) -> Result<Vec<f64>> {
    if demos.trajectories.is_empty() {
        bail!(Usage, "demonstrator returns need at least one demonstration");
    }
    check_dims(demos.feature_dim, posterior)?;
    let counts = demos.feature_counts()?;
    let mut mu = vec![0.0; demos.feature_dim];
    for c in &counts {
        for (m, x) in mu.iter_mut().zip(c) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= counts.len() as f64);
    Ok(posterior.hypotheses().iter().map(|h| dot(&h.weights, &mu)).collect())
}
