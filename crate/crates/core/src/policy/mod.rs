//! Stochastic MLP policies, multi-head value networks, and Adam.

mod adam;
mod mlp;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub use adam::Adam;
pub use mlp::{zeros_like, Mlp, Tape};

use crate::env::{Action, ActionSpace};
use crate::error::bail;
use crate::rng::Rng;
use crate::Result;

/// Initial log standard deviation of Gaussian policies.
pub const INITIAL_LOG_STD: f64 = -0.5;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Action distribution at one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    /// Log-probabilities of each action.
    Categorical { log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

impl ActionDist {
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => match log_probs.get(*a) {
                Some(lp) => Ok(*lp),
                None => bail!(Usage, "action {a} out of range for {} choices", log_probs.len()),
            },
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(a)) if a.len() == mean.len() => {
                Ok(mean.iter().zip(log_std).zip(a).map(|((m, s), x)| gaussian_log_density(*x, *m, *s)).sum())
            }
            _ => bail!(Usage, "action {action:?} does not match the policy's action space"),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { log_probs } => {
                -log_probs.iter().map(|lp| if lp.is_finite() { libm::exp(*lp) * lp } else { 0.0 }).sum::<f64>()
            }
            ActionDist::Gaussian { log_std, .. } => log_std.iter().map(|s| s + HALF_LOG_TWO_PI + 0.5).sum(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Action {
        match self {
            ActionDist::Categorical { log_probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, lp) in log_probs.iter().enumerate() {
                    acc += libm::exp(*lp);
                    if u < acc {
                        return Action::Discrete(a);
                    }
                }
                Action::Discrete(log_probs.len() - 1)
            }
            ActionDist::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + libm::exp(*s) * z
                    })
                    .collect(),
            ),
        }
    }
}

fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / libm::exp(log_std);
    -0.5 * z * z - log_std - HALF_LOG_TWO_PI
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    logits.iter().map(|l| l - lse).collect()
}

/// Stochastic policy: MLP body with a categorical-logit or Gaussian-mean
/// head. Gaussian policies append a state-independent log-std vector to the
/// flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    net: Mlp,
    space: ActionSpace,
    params: Vec<f64>,
}

impl Policy {
    pub fn new(obs_dim: usize, space: ActionSpace, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let net = Mlp::new(Self::layer_sizes(obs_dim, space, hidden)?);
        let mut params = net.init(rng, 1.0, 0.01);
        if let ActionSpace::Continuous(d) = space {
            params.extend(core::iter::repeat_n(INITIAL_LOG_STD, d));
        }
        Ok(Self { net, space, params })
    }

    /// Rebuild from a flat parameter vector, e.g. a checkpoint.
    pub fn from_params(obs_dim: usize, space: ActionSpace, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        let net = Mlp::new(Self::layer_sizes(obs_dim, space, hidden)?);
        let extra = match space {
            ActionSpace::Continuous(d) => d,
            ActionSpace::Discrete(_) => 0,
        };
        if params.len() != net.param_count() + extra {
            bail!(Data, "expected {} policy parameters, got {}", net.param_count() + extra, params.len());
        }
        if params.iter().any(|p| !p.is_finite()) {
            bail!(Data, "policy parameters must be finite");
        }
        Ok(Self { net, space, params })
    }

    fn layer_sizes(obs_dim: usize, space: ActionSpace, hidden: &[usize]) -> Result<Vec<usize>> {
        let out = match space {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        };
        if obs_dim == 0 || out == 0 || hidden.contains(&0) {
            bail!(Param, "network dimensions must be positive");
        }
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(out);
        Ok(sizes)
    }

    pub fn observation_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_space(&self) -> ActionSpace {
        self.space
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.net.sizes();
        &s[1..s.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.params.split_at(self.net.param_count())
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.net.input_dim() {
            bail!(Data, "observation has {} entries, policy expects {}", obs.len(), self.net.input_dim());
        }
        Ok(())
    }

    fn dist_from_tape(&self, tape: &Tape) -> Result<ActionDist> {
        let out = tape.output();
        if out.iter().any(|v| !v.is_finite()) {
            bail!(Numerical, "policy network produced a non-finite output");
        }
        Ok(match self.space {
            ActionSpace::Discrete(_) => ActionDist::Categorical { log_probs: log_softmax(out) },
            ActionSpace::Continuous(_) => ActionDist::Gaussian { mean: out.to_vec(), log_std: self.split().1.to_vec() },
        })
    }

    pub fn distribution_with(&self, obs: &[f64], tape: &mut Tape) -> Result<ActionDist> {
        self.check_obs(obs)?;
        self.net.forward(self.split().0, obs, tape);
        self.dist_from_tape(tape)
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<ActionDist> {
        self.distribution_with(obs, &mut Tape::default())
    }

    /// Draw an action and return it with its exact log-probability.
    pub fn sample_action(&self, obs: &[f64], rng: &mut Rng) -> Result<(Action, f64)> {
        let dist = self.distribution(obs)?;
        let action = dist.sample(rng);
        let lp = dist.log_prob(&action)?;
        Ok((action, lp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &Action) -> Result<f64> {
        self.distribution(obs)?.log_prob(action)
    }

    pub fn log_prob_with(&self, obs: &[f64], action: &Action, tape: &mut Tape) -> Result<f64> {
        self.distribution_with(obs, tape)?.log_prob(action)
    }

    pub fn entropy(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.distribution(obs)?.entropy())
    }

    /// Accumulate `scale * ∇ log π(action | obs)` into `grad` and return the
    /// log-probability.
    pub fn accumulate_log_prob_grad(
        &self,
        obs: &[f64],
        action: &Action,
        scale: f64,
        grad: &mut [f64],
        tape: &mut Tape,
    ) -> Result<f64> {
        self.log_prob_then_grad(obs, action, |_| scale, grad, tape)
    }

    /// One forward pass: compute `log π(action | obs)`, let `scale_of` pick a
    /// multiplier from it, and accumulate `multiplier * ∇ log π` into `grad`.
    pub fn log_prob_then_grad(
        &self,
        obs: &[f64],
        action: &Action,
        scale_of: impl FnOnce(f64) -> f64,
        grad: &mut [f64],
        tape: &mut Tape,
    ) -> Result<f64> {
        let dist = self.distribution_with(obs, tape)?;
        let lp = dist.log_prob(action)?;
        let scale = scale_of(lp);
        if scale == 0.0 {
            return Ok(lp);
        }
        let n_net = self.net.param_count();
        let (g_net, g_std) = grad.split_at_mut(n_net);
        let mut d_out = core::mem::take(&mut tape.head);
        d_out.clear();
        match (&dist, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => d_out.extend(
                log_probs.iter().enumerate().map(|(k, lp)| scale * ((k == *a) as u8 as f64 - libm::exp(*lp))),
            ),
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(x)) => {
                for (k, ((m, s), xk)) in mean.iter().zip(log_std).zip(x).enumerate() {
                    let inv_var = libm::exp(-2.0 * s);
                    let diff = xk - m;
                    d_out.push(scale * diff * inv_var);
                    g_std[k] += scale * (diff * diff * inv_var - 1.0);
                }
            }
            _ => unreachable!("log_prob validated the action"),
        }
        self.net.backward(self.split().0, tape, &d_out, g_net);
        tape.head = d_out;
        Ok(lp)
    }

    /// Gradient of `log π(action | obs)` over all parameters.
    pub fn log_prob_grad(&self, obs: &[f64], action: &Action) -> Result<Vec<f64>> {
        let mut grad = zeros_like(&self.params);
        self.accumulate_log_prob_grad(obs, action, 1.0, &mut grad, &mut Tape::default())?;
        Ok(grad)
    }
}

/// MLP with one value head per reward hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    net: Mlp,
    params: Vec<f64>,
}

impl ValueNet {
    pub fn new(obs_dim: usize, heads: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let net = Mlp::new(Self::layer_sizes(obs_dim, heads, hidden)?);
        let params = net.init(rng, 1.0, 1.0);
        Ok(Self { net, params })
    }

    pub fn from_params(obs_dim: usize, heads: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        let net = Mlp::new(Self::layer_sizes(obs_dim, heads, hidden)?);
        if params.len() != net.param_count() {
            bail!(Data, "expected {} value parameters, got {}", net.param_count(), params.len());
        }
        Ok(Self { net, params })
    }

    fn layer_sizes(obs_dim: usize, heads: usize, hidden: &[usize]) -> Result<Vec<usize>> {
        if obs_dim == 0 || heads == 0 || hidden.contains(&0) {
            bail!(Param, "network dimensions must be positive");
        }
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(heads);
        Ok(sizes)
    }

    pub fn heads(&self) -> usize {
        self.net.output_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn value_forward_with(&self, obs: &[f64], tape: &mut Tape) -> Result<Vec<f64>> {
        if obs.len() != self.net.input_dim() {
            bail!(Data, "observation has {} entries, value net expects {}", obs.len(), self.net.input_dim());
        }
        self.net.forward(&self.params, obs, tape);
        Ok(tape.output().to_vec())
    }

    pub fn value_forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.value_forward_with(obs, &mut Tape::default())
    }

    /// Accumulate `scale * ∇ ½ Σ_i (v_i - target_i)^2` into `grad`; returns the
    /// loss.
    pub fn accumulate_value_grad(
        &self,
        obs: &[f64],
        target: &[f64],
        scale: f64,
        grad: &mut [f64],
        tape: &mut Tape,
    ) -> Result<f64> {
        if target.len() != self.heads() {
            bail!(Data, "{} targets for {} value heads", target.len(), self.heads());
        }
        if obs.len() != self.net.input_dim() {
            bail!(Data, "observation has {} entries, value net expects {}", obs.len(), self.net.input_dim());
        }
        self.net.forward(&self.params, obs, tape);
        let mut d_out = core::mem::take(&mut tape.head);
        d_out.clear();
        let mut loss = 0.0;
        for (v, t) in tape.output().iter().zip(target) {
            let r = v - t;
            loss += 0.5 * r * r;
            d_out.push(scale * r);
        }
        self.net.backward(&self.params, tape, &d_out, grad);
        tape.head = d_out;
        Ok(loss)
    }

    pub fn value_grad(&self, obs: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        let mut grad = zeros_like(&self.params);
        self.accumulate_value_grad(obs, target, 1.0, &mut grad, &mut Tape::default())?;
        Ok(grad)
    }
}
