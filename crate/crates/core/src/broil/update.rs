use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::batch::TrajectoryBatch;
use crate::error::bail;
use crate::policy::{zeros_like, Adam, Policy, Tape, ValueNet};
use crate::rng::Rng;
use crate::Result;

/// Per-step scale `1 / (|T| · T_τ)` of the trajectory-then-step average.
fn step_scales(batch: &TrajectoryBatch) -> Vec<f64> {
    let n = batch.len() as f64;
    batch.trajectories.iter().flat_map(|t| core::iter::repeat_n(1.0 / (n * t.len() as f64), t.len())).collect()
}

fn check_aligned(batch: &TrajectoryBatch, per_step: usize) -> Result<()> {
    if batch.is_empty() {
        bail!(Usage, "cannot update from an empty batch");
    }
    if per_step != batch.total_steps() {
        bail!(Data, "{per_step} weights for {} batch steps", batch.total_steps());
    }
    Ok(())
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        bail!(Numerical, "{what} gradient is not finite");
    }
    Ok(())
}

/// `ĝ = (1/|T|) Σ_τ Σ_t ∇ log π(a_t | s_t) w_t`.
pub fn policy_gradient(policy: &Policy, batch: &TrajectoryBatch, weights: &[f64]) -> Result<Vec<f64>> {
    check_aligned(batch, weights.len())?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = zeros_like(policy.params());
    let mut tape = Tape::default();
    let mut w = weights.iter();
    for traj in &batch.trajectories {
        for (obs, action) in traj.observations.iter().zip(&traj.actions) {
            let wt = *w.next().expect("aligned");
            if wt != 0.0 {
                policy.accumulate_log_prob_grad(obs, action, scale * wt, &mut grad, &mut tape)?;
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    /// Policy optimizer steps taken.
    pub policy_steps: usize,
    /// KL(old ‖ new) estimate when the policy phase ended.
    pub approx_kl: f64,
    /// Fraction of steps whose ratio was clipped in the last pass.
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Final mean value loss (PPO only).
    pub value_loss: Option<f64>,
}

/// One ascent step along the vanilla BROIL policy gradient.
pub fn vanilla_update(
    policy: &mut Policy,
    opt: &mut Adam,
    batch: &TrajectoryBatch,
    weights: &[f64],
) -> Result<UpdateStats> {
    let grad = policy_gradient(policy, batch, weights)?;
    check_finite(&grad, "policy")?;
    opt.ascend(policy.params_mut(), &grad);
    let grad_norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
    Ok(UpdateStats { policy_steps: 1, grad_norm, ..UpdateStats::default() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoSettings {
    pub clip_ratio: f64,
    pub target_kl: f64,
    pub policy_iters: usize,
    pub value_iters: usize,
    /// Steps per minibatch; `None` uses the full batch for every step.
    pub minibatch: Option<usize>,
}

/// Gradient of the clipped surrogate over `steps` (flat indices), each
/// weighted by `scale[step]`. Returns `(grad, Σ scale·(old − new log π), clipped count)`.
#[allow(clippy::too_many_arguments)]
fn surrogate_gradient(
    policy: &Policy,
    steps: &[(usize, usize, usize)],
    batch: &TrajectoryBatch,
    weights: &[f64],
    scales: &[f64],
    clip: f64,
    tape: &mut Tape,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut grad = zeros_like(policy.params());
    let mut kl = 0.0;
    let mut clipped = 0;
    for &(flat, e, t) in steps {
        let traj = &batch.trajectories[e];
        let (obs, action, old) = (&traj.observations[t], &traj.actions[t], traj.log_probs[t]);
        let w = weights[flat];
        let mut was_clipped = false;
        let lp = policy.log_prob_then_grad(
            obs,
            action,
            |lp| {
                let ratio = libm::exp(lp - old);
                was_clipped = (w >= 0.0 && ratio > 1.0 + clip) || (w < 0.0 && ratio < 1.0 - clip);
                // ∇ (ratio · w) = ratio · w · ∇ log π
                if was_clipped { 0.0 } else { scales[flat] * ratio * w }
            },
            &mut grad,
            tape,
        )?;
        kl += old - lp;
        clipped += was_clipped as usize;
    }
    Ok((grad, kl, clipped))
}

/// PPO-clip ascent with BROIL weights in place of advantages, followed by
/// value-head regression onto `value_targets`.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut Policy,
    policy_opt: &mut Adam,
    value: &mut ValueNet,
    value_opt: &mut Adam,
    batch: &TrajectoryBatch,
    weights: &[f64],
    value_targets: &[Vec<f64>],
    settings: &PpoSettings,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    check_aligned(batch, weights.len())?;
    check_aligned(batch, value_targets.len())?;
    let scales = step_scales(batch);
    let total = batch.total_steps();
    let mut index: Vec<(usize, usize, usize)> = Vec::with_capacity(total);
    for (e, traj) in batch.trajectories.iter().enumerate() {
        for t in 0..traj.len() {
            index.push((index.len(), e, t));
        }
    }
    let mut stats = UpdateStats::default();
    let mut tape = Tape::default();
    'outer: for _ in 0..settings.policy_iters {
        let chunk = settings.minibatch.unwrap_or(total).clamp(1, total);
        if chunk < total {
            index.shuffle(rng);
        }
        for part in index.chunks(chunk) {
            // rescale so a minibatch estimates the full-batch objective
            let boost = total as f64 / part.len() as f64;
            let (mut grad, kl_sum, clipped) =
                surrogate_gradient(policy, part, batch, weights, &scales, settings.clip_ratio, &mut tape)?;
            stats.approx_kl = kl_sum / part.len() as f64;
            stats.clip_fraction = clipped as f64 / part.len() as f64;
            if stats.approx_kl > settings.target_kl {
                break 'outer;
            }
            if boost != 1.0 {
                grad.iter_mut().for_each(|g| *g *= boost);
            }
            check_finite(&grad, "policy")?;
            stats.grad_norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
            policy_opt.ascend(policy.params_mut(), &grad);
            stats.policy_steps += 1;
        }
    }
    stats.value_loss = Some(fit_value(value, value_opt, batch, value_targets, settings.value_iters)?);
    Ok(stats)
}

/// Full-batch descent on the mean of `½ Σ_i (v_i − target_i)²`; returns the
/// loss before the last step.
pub fn fit_value(
    value: &mut ValueNet,
    opt: &mut Adam,
    batch: &TrajectoryBatch,
    targets: &[Vec<f64>],
    iters: usize,
) -> Result<f64> {
    check_aligned(batch, targets.len())?;
    let scale = 1.0 / targets.len() as f64;
    let mut tape = Tape::default();
    let mut loss = 0.0;
    for _ in 0..iters {
        let mut grad = zeros_like(value.params());
        loss = 0.0;
        let mut k = 0;
        for traj in &batch.trajectories {
            for obs in &traj.observations {
                loss += value.accumulate_value_grad(obs, &targets[k], scale, &mut grad, &mut tape)?;
                k += 1;
            }
        }
        loss *= scale;
        check_finite(&grad, "value")?;
        opt.descend(value.params_mut(), &grad);
    }
    Ok(loss)
}
