use alloc::vec;
use alloc::vec::Vec;

use super::batch::{ReturnMatrix, TrajectoryBatch};
use crate::error::bail;
use crate::policy::ValueNet;
use crate::posterior::{dot, RewardPosterior};
use crate::risk::{erm_softmax_weights, solve_sigma, RiskMeasure, RiskParams};
use crate::Result;

/// Performance metric the risk measure is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Metric {
    #[default]
    ExpectedReturn,
    BaselineRegret,
}

/// Per-step policy-gradient signal `Φ_t^{r_i}` for every hypothesis, flattened
/// over the batch in trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    /// Feature reward-to-go `ψ_t`; hypothesis `i` sees `Φ_t^i = w_i · ψ_t`.
    FeatureToGo(Vec<Vec<f64>>),
    /// Explicit `Φ_t^i` per step (one entry per hypothesis).
    PerHypothesis(Vec<Vec<f64>>),
}

impl Phi {
    pub fn steps(&self) -> usize {
        match self {
            Phi::FeatureToGo(v) | Phi::PerHypothesis(v) => v.len(),
        }
    }

    /// Materialize `Φ_t^i` for every step and hypothesis.
    pub fn per_hypothesis(&self, posterior: &RewardPosterior) -> Vec<Vec<f64>> {
        match self {
            Phi::PerHypothesis(v) => v.clone(),
            Phi::FeatureToGo(psi) => psi.iter().map(|p| posterior.returns(p)).collect(),
        }
    }
}

/// Undiscounted suffix sums of the features of each trajectory.
pub fn feature_reward_to_go(batch: &TrajectoryBatch) -> Phi {
    let mut out = Vec::with_capacity(batch.total_steps());
    for traj in &batch.trajectories {
        let k = traj.features.first().map_or(0, Vec::len);
        let start = out.len();
        out.resize(start + traj.len(), Vec::new());
        let mut acc = vec![0.0; k];
        for t in (0..traj.len()).rev() {
            for (a, f) in acc.iter_mut().zip(&traj.features[t]) {
                *a += f;
            }
            out[start + t] = acc.clone();
        }
    }
    Phi::FeatureToGo(out)
}

fn step_rewards(batch: &TrajectoryBatch, posterior: &RewardPosterior) -> Vec<Vec<Vec<f64>>> {
    batch
        .trajectories
        .iter()
        .map(|t| t.features.iter().map(|phi| posterior.returns(phi)).collect())
        .collect()
}

/// Value estimates along one episode and the bootstrap value after it.
type EpisodeValues = (Vec<Vec<f64>>, Vec<f64>);

/// Value estimates at each visited state plus the bootstrap value after the
/// last step (zero when the environment terminated the episode).
fn values(batch: &TrajectoryBatch, value: &ValueNet) -> Result<Vec<EpisodeValues>> {
    batch
        .trajectories
        .iter()
        .map(|traj| {
            let v: Vec<Vec<f64>> = traj.observations.iter().map(|o| value.value_forward(o)).collect::<Result<_>>()?;
            let last = if traj.terminated { vec![0.0; value.heads()] } else { value.value_forward(&traj.final_observation)? };
            Ok((v, last))
        })
        .collect()
}

/// Generalized advantage estimates per step and hypothesis, unnormalized.
pub fn gae_advantages(
    batch: &TrajectoryBatch,
    posterior: &RewardPosterior,
    value: &ValueNet,
    gamma: f64,
    lam: f64,
) -> Result<Vec<Vec<f64>>> {
    if value.heads() != posterior.len() {
        bail!(Data, "value net has {} heads for {} hypotheses", value.heads(), posterior.len());
    }
    let rewards = step_rewards(batch, posterior);
    let vals = values(batch, value)?;
    let n = posterior.len();
    let mut out = Vec::with_capacity(batch.total_steps());
    for (r, (v, last)) in rewards.iter().zip(&vals) {
        let start = out.len();
        out.resize(start + r.len(), Vec::new());
        let mut adv = vec![0.0; n];
        let mut next_v = last.clone();
        for t in (0..r.len()).rev() {
            for i in 0..n {
                let delta = r[t][i] + gamma * next_v[i] - v[t][i];
                adv[i] = delta + gamma * lam * adv[i];
            }
            out[start + t] = adv.clone();
            next_v.clone_from(&v[t]);
        }
    }
    Ok(out)
}

/// Discounted reward-to-go per hypothesis, bootstrapped with the value of the
/// final observation for truncated episodes. These are the value targets.
pub fn discounted_reward_to_go(
    batch: &TrajectoryBatch,
    posterior: &RewardPosterior,
    value: Option<&ValueNet>,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let rewards = step_rewards(batch, posterior);
    let n = posterior.len();
    let mut out = Vec::with_capacity(batch.total_steps());
    for (traj, r) in batch.trajectories.iter().zip(&rewards) {
        let mut acc = match value {
            Some(v) if !traj.terminated => v.value_forward(&traj.final_observation)?,
            _ => vec![0.0; n],
        };
        let start = out.len();
        out.resize(start + r.len(), Vec::new());
        for t in (0..r.len()).rev() {
            for i in 0..n {
                acc[i] = r[t][i] + gamma * acc[i];
            }
            out[start + t] = acc.clone();
        }
    }
    Ok(out)
}

/// Standardize each hypothesis column to zero mean and unit standard
/// deviation over the batch: `(a - mean) / (std + 1e-8)`.
pub fn standardize_per_hypothesis(adv: &mut [Vec<f64>]) {
    let Some(n) = adv.first().map(Vec::len) else { return };
    let count = adv.len() as f64;
    for i in 0..n {
        let mean = adv.iter().map(|a| a[i]).sum::<f64>() / count;
        let var = adv.iter().map(|a| (a[i] - mean) * (a[i] - mean)).sum::<f64>() / count;
        let scale = libm::sqrt(var) + 1e-8;
        for a in adv.iter_mut() {
            a[i] = (a[i] - mean) / scale;
        }
    }
}

/// Per-hypothesis multipliers `c_i` such that `w_t = Σ_i c_i Φ_t^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub c: Vec<f64>,
    /// CVaR maximizer on the metric's return vector.
    pub sigma_star: Option<f64>,
}

/// CVaR: `c_i = p_i (λ + (1-λ)/(1-α) 1[σ* >= ρ_i])`.
/// ERM: `c_i = λ p_i + (1-λ) q_i` with `q` the ERM softmax weights.
pub fn hypothesis_coefficients(probs: &[f64], rho: &[f64], risk: &RiskParams) -> Result<Coefficients> {
    risk.validate()?;
    if probs.len() != rho.len() {
        bail!(Data, "{} probabilities for {} returns", probs.len(), rho.len());
    }
    let lambda = risk.lambda;
    match risk.measure {
        RiskMeasure::Cvar => {
            let sigma = solve_sigma(rho, probs, risk.alpha)?;
            let tail = (1.0 - lambda) / (1.0 - risk.alpha);
            let c = probs
                .iter()
                .zip(rho)
                .map(|(p, r)| p * (lambda + if sigma >= *r { tail } else { 0.0 }))
                .collect();
            Ok(Coefficients { c, sigma_star: Some(sigma) })
        }
        RiskMeasure::Erm => {
            let q = erm_softmax_weights(rho, probs, risk.alpha)?;
            let c = probs.iter().zip(&q).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
            Ok(Coefficients { c, sigma_star: None })
        }
    }
}

/// The return vector the risk measure sees under `metric`.
pub fn metric_rho(returns: &ReturnMatrix, metric: Metric) -> Result<&[f64]> {
    match metric {
        Metric::ExpectedReturn => Ok(&returns.rho),
        Metric::BaselineRegret => match &returns.baseline_regret_rho {
            Some(br) => Ok(br),
            None => bail!(Usage, "baseline regret needs demonstrator returns"),
        },
    }
}

/// Weights `w_t` for every step of the batch together with the coefficients
/// they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub per_step: Vec<f64>,
    pub coefficients: Coefficients,
}

pub fn compute_weights(
    phi: &Phi,
    posterior: &RewardPosterior,
    returns: &ReturnMatrix,
    risk: &RiskParams,
    metric: Metric,
) -> Result<Weights> {
    let rho = metric_rho(returns, metric)?;
    if rho.len() != posterior.len() {
        bail!(Data, "{} returns for {} hypotheses", rho.len(), posterior.len());
    }
    let coefficients = hypothesis_coefficients(&posterior.probs(), rho, risk)?;
    let c = &coefficients.c;
    let per_step = match phi {
        Phi::FeatureToGo(psi) => {
            // linear in the reward: fold the coefficients into one weight vector
            let mut omega = vec![0.0; posterior.feature_dim()];
            for (ci, h) in c.iter().zip(posterior.hypotheses()) {
                for (o, w) in omega.iter_mut().zip(&h.weights) {
                    *o += ci * w;
                }
            }
            psi.iter()
                .map(|p| {
                    if p.len() != omega.len() {
                        bail!(Data, "feature-to-go has dimension {}, expected {}", p.len(), omega.len());
                    }
                    Ok(dot(&omega, p))
                })
                .collect::<Result<_>>()?
        }
        Phi::PerHypothesis(rows) => rows
            .iter()
            .map(|row| {
                if row.len() != c.len() {
                    bail!(Data, "Φ row has {} entries for {} hypotheses", row.len(), c.len());
                }
                Ok(c.iter().zip(row).map(|(ci, f)| ci * f).sum())
            })
            .collect::<Result<_>>()?,
    };
    Ok(Weights { per_step, coefficients })
}
