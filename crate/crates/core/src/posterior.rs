//! Discrete posteriors over linear reward functions and their inference from
//! pairwise trajectory preferences.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::bail;
use crate::risk::MASS_TOLERANCE;
use crate::{rng, Result};

/// One linear reward `r(s, a) = weights · phi(s, a)` with its probability.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardHypothesis {
    pub weights: Vec<f64>,
    pub prob: f64,
}

impl RewardHypothesis {
    pub fn reward(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features)
    }
}

/// Finite posterior over linear reward hypotheses sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardPosterior {
    hypotheses: Vec<RewardHypothesis>,
    feature_names: Vec<String>,
}

impl RewardPosterior {
    pub fn new(feature_names: Vec<String>, hypotheses: Vec<RewardHypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            bail!(Param, "posterior needs at least one hypothesis");
        }
        let k = feature_names.len();
        if k == 0 {
            bail!(Param, "posterior needs at least one feature");
        }
        let mut total = 0.0;
        for (i, h) in hypotheses.iter().enumerate() {
            if h.weights.len() != k {
                bail!(Param, "hypothesis {i} has {} weights, expected {k}", h.weights.len());
            }
            if h.weights.iter().any(|w| !w.is_finite()) {
                bail!(Param, "hypothesis {i} has non-finite weights");
            }
            if !(h.prob.is_finite() && h.prob >= 0.0) {
                bail!(Param, "hypothesis {i} has invalid probability {}", h.prob);
            }
            total += h.prob;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            bail!(Param, "hypothesis probabilities sum to {total}, expected 1");
        }
        Ok(Self { hypotheses, feature_names })
    }

    /// Equal probability on every weight vector.
    pub fn uniform(feature_names: Vec<String>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let p = 1.0 / weights.len().max(1) as f64;
        let hypotheses = weights
            .into_iter()
            .map(|weights| RewardHypothesis { weights, prob: p })
            .collect();
        Self::new(feature_names, hypotheses)
    }

    pub fn hypotheses(&self) -> &[RewardHypothesis] {
        &self.hypotheses
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.prob).collect()
    }

    /// Return of a feature-count vector under every hypothesis.
    pub fn returns(&self, feature_counts: &[f64]) -> Vec<f64> {
        self.hypotheses.iter().map(|h| h.reward(feature_counts)).collect()
    }

    /// Single-hypothesis posterior holding the probability-weighted mean reward.
    pub fn collapse_to_mean(&self) -> Self {
        Self {
            hypotheses: vec![RewardHypothesis { weights: mean_hypothesis(self), prob: 1.0 }],
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Probability-weighted mean of the hypothesis weight vectors.
pub fn mean_hypothesis(posterior: &RewardPosterior) -> Vec<f64> {
    let mut mean = vec![0.0; posterior.feature_dim()];
    for h in &posterior.hypotheses {
        for (m, w) in mean.iter_mut().zip(&h.weights) {
            *m += h.prob * w;
        }
    }
    mean
}

/// Trajectories described by per-step feature vectors, plus pairwise
/// preferences `(i, j)` meaning trajectory `i` is preferred over `j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreferenceDataset {
    pub feature_dim: usize,
    pub trajectories: Vec<Vec<Vec<f64>>>,
    pub preferences: Vec<(usize, usize)>,
}

impl PreferenceDataset {
    pub fn new(
        feature_dim: usize,
        trajectories: Vec<Vec<Vec<f64>>>,
        preferences: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let data = Self { feature_dim, trajectories, preferences };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        for (t, traj) in self.trajectories.iter().enumerate() {
            if traj.is_empty() {
                bail!(Data, "trajectory {t} is empty");
            }
            if let Some(step) = traj.iter().position(|phi| phi.len() != self.feature_dim) {
                bail!(Data, "trajectory {t} step {step} does not have {} features", self.feature_dim);
            }
        }
        let n = self.trajectories.len();
        for &(i, j) in &self.preferences {
            if i >= n || j >= n {
                bail!(Data, "preference ({i}, {j}) refers to a missing trajectory");
            }
            if i == j {
                bail!(Data, "preference ({i}, {j}) compares a trajectory with itself");
            }
        }
        Ok(())
    }

    /// Feature counts of every trajectory.
    pub fn feature_counts(&self) -> Result<Vec<Vec<f64>>> {
        self.trajectories.iter().map(|t| feature_counts(t)).collect()
    }
}

/// Undiscounted sum of per-step feature vectors.
pub fn feature_counts<V: AsRef<[f64]>>(trajectory: &[V]) -> Result<Vec<f64>> {
    let Some(first) = trajectory.first() else {
        bail!(Data, "cannot count features of an empty trajectory");
    };
    let k = first.as_ref().len();
    let mut mu = vec![0.0; k];
    for (t, phi) in trajectory.iter().enumerate() {
        let phi = phi.as_ref();
        if phi.len() != k {
            bail!(Data, "step {t} has {} features, expected {k}", phi.len());
        }
        for (m, f) in mu.iter_mut().zip(phi) {
            *m += f;
        }
    }
    Ok(mu)
}

/// Bradley–Terry log-likelihood of the preferences under reward `weights`:
/// `sum log sigmoid(beta * (w·Φ_i - w·Φ_j))`.
pub fn preference_log_likelihood(weights: &[f64], data: &PreferenceDataset, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if weights.len() != data.feature_dim {
        bail!(Data, "{} weights for {} features", weights.len(), data.feature_dim);
    }
    data.validate()?;
    let counts = data.feature_counts()?;
    let returns: Vec<f64> = counts.iter().map(|mu| dot(weights, mu)).collect();
    Ok(log_likelihood_from_returns(&returns, &data.preferences, beta))
}

fn log_likelihood_from_returns(returns: &[f64], preferences: &[(usize, usize)], beta: f64) -> f64 {
    preferences
        .iter()
        .map(|&(i, j)| -softplus(beta * (returns[j] - returns[i])))
        .sum()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        bail!(Param, "beta must be positive, got {beta}");
    }
    Ok(())
}

/// Metropolis–Hastings settings. Defaults follow the reference setup: 20,000
/// steps with proposal scale 0.5, 500 burn-in steps, thinned to 20 samples.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct McmcConfig {
    pub steps: usize,
    pub proposal_step: f64,
    pub burn_in: usize,
    pub downsample_to: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { steps: 20_000, proposal_step: 0.5, burn_in: 500, downsample_to: 20, beta: 1.0, seed: 0 }
    }
}

/// Every state visited by a chain, with its log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcChain {
    pub samples: Vec<Vec<f64>>,
    pub log_likelihoods: Vec<f64>,
    pub accepted: usize,
}

impl McmcChain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.samples.len().max(1) as f64
    }

    /// Evenly spaced post-burn-in samples.
    pub fn thinned(&self, burn_in: usize, downsample_to: usize) -> Result<Vec<Vec<f64>>> {
        if downsample_to == 0 {
            bail!(Param, "downsample_to must be at least 1");
        }
        let kept = self.samples.len().saturating_sub(burn_in);
        let stride = kept / downsample_to;
        if stride == 0 {
            bail!(Param, "{kept} post-burn-in samples cannot be thinned to {downsample_to}");
        }
        Ok((0..downsample_to).map(|j| self.samples[burn_in + j * stride].clone()).collect())
    }
}

fn l1_normalize(w: &mut [f64]) -> bool {
    let norm: f64 = w.iter().map(|x| x.abs()).sum();
    if !(norm.is_finite() && norm > 0.0) {
        return false;
    }
    for x in w.iter_mut() {
        *x /= norm;
    }
    true
}

/// Run the Metropolis–Hastings chain over L1-normalized weight vectors.
///
/// The chain starts at the uniform positive vector. Each proposal adds an
/// isotropic Gaussian step and renormalizes before the acceptance test, and
/// is accepted with probability `min(1, exp(Δ log-likelihood))` (uniform prior
/// on the L1 sphere). `samples` has one entry per step.
pub fn run_chain(data: &PreferenceDataset, config: &McmcConfig) -> Result<McmcChain> {
    check_beta(config.beta)?;
    if data.trajectories.is_empty() {
        bail!(Inference, "preference dataset has no trajectories");
    }
    if data.feature_dim == 0 {
        bail!(Inference, "preference dataset has no features");
    }
    if !(config.proposal_step.is_finite() && config.proposal_step > 0.0) {
        bail!(Param, "proposal step must be positive, got {}", config.proposal_step);
    }
    data.validate()?;
    let counts = data.feature_counts()?;
    let loglik = |w: &[f64]| {
        let returns: Vec<f64> = counts.iter().map(|mu| dot(w, mu)).collect();
        log_likelihood_from_returns(&returns, &data.preferences, config.beta)
    };

    let k = data.feature_dim;
    let mut rng = rng::stream(config.seed, rng::Stream::Mcmc);
    let mut current = vec![1.0 / k as f64; k];
    let mut current_ll = loglik(&current);
    let mut chain = McmcChain {
        samples: Vec::with_capacity(config.steps),
        log_likelihoods: Vec::with_capacity(config.steps),
        accepted: 0,
    };
    let mut proposal = vec![0.0; k];
    for _ in 0..config.steps {
        for (p, c) in proposal.iter_mut().zip(&current) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = c + config.proposal_step * z;
        }
        let u: f64 = rng.random();
        if l1_normalize(&mut proposal) {
            let proposal_ll = loglik(&proposal);
            if libm::log(u) < proposal_ll - current_ll {
                current.copy_from_slice(&proposal);
                current_ll = proposal_ll;
                chain.accepted += 1;
            }
        }
        chain.samples.push(current.clone());
        chain.log_likelihoods.push(current_ll);
    }
    Ok(chain)
}

/// Posterior of `downsample_to` equally weighted thinned chain samples.
pub fn mcmc_infer(
    data: &PreferenceDataset,
    config: &McmcConfig,
    feature_names: Vec<String>,
) -> Result<RewardPosterior> {
    if config.steps <= config.burn_in {
        bail!(Param, "steps ({}) must exceed burn-in ({})", config.steps, config.burn_in);
    }
    if feature_names.len() != data.feature_dim {
        bail!(Param, "{} feature names for {} features", feature_names.len(), data.feature_dim);
    }
    let chain = run_chain(data, config)?;
    let samples = chain.thinned(config.burn_in, config.downsample_to)?;
    RewardPosterior::uniform(feature_names, samples)
}

/// Visited weight vector with the highest preference log-likelihood (the
/// maximum-likelihood reward baseline). Returned with probability 1.
pub fn map_hypothesis(chain: &McmcChain) -> Result<RewardHypothesis> {
    if chain.samples.is_empty() || chain.samples.len() != chain.log_likelihoods.len() {
        bail!(Param, "chain is empty or inconsistent");
    }
    let mut best = 0;
    for (i, ll) in chain.log_likelihoods.iter().enumerate() {
        if *ll > chain.log_likelihoods[best] {
            best = i;
        }
    }
    Ok(RewardHypothesis { weights: chain.samples[best].clone(), prob: 1.0 })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| alloc::format!("f{i}")).collect()
    }

    #[test]
    fn feature_count_examples() {
        assert_eq!(feature_counts(&[vec![1.0, 0.0, 2.0]]).unwrap(), vec![1.0, 0.0, 2.0]);
        assert_eq!(feature_counts(&vec![vec![0.0, 1.0]; 3]).unwrap(), vec![0.0, 3.0]);
        let steps = [vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(feature_counts(&steps).unwrap(), vec![2.0, 2.0]);
        assert!(feature_counts(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(feature_counts::<Vec<f64>>(&[]).is_err());
    }

    fn single_step(returns: &[f64], prefs: Vec<(usize, usize)>) -> PreferenceDataset {
        let trajectories = returns.iter().map(|r| vec![vec![*r]]).collect();
        PreferenceDataset::new(1, trajectories, prefs).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let data = single_step(&[3.0, 3.0, 3.0], vec![(0, 1), (1, 2), (2, 0)]);
        let ll = preference_log_likelihood(&[0.7], &data, 1.0).unwrap();
        assert!((ll - 3.0 * libm::log(0.5)).abs() < 1e-12);

        let data = single_step(&[100.0, 0.0], vec![(0, 1)]);
        assert!(preference_log_likelihood(&[1.0], &data, 1.0).unwrap().abs() < 1e-40);

        let data = single_step(&[2.0, 1.0], vec![(0, 1)]);
        let e2 = libm::exp(2.0);
        let expected = libm::log(e2 / (e2 + libm::exp(1.0)));
        let ll = preference_log_likelihood(&[1.0], &data, 1.0).unwrap();
        assert!((ll - expected).abs() < 1e-12);
        assert!((ll + 0.3133).abs() < 1e-4);

        let empty = single_step(&[1.0, 2.0], vec![]);
        assert_eq!(preference_log_likelihood(&[1.0], &empty, 1.0).unwrap(), 0.0);
        assert!(preference_log_likelihood(&[1.0], &empty, 0.0).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(PreferenceDataset::new(1, vec![vec![vec![1.0]]], vec![(0, 0)]).is_err());
        assert!(PreferenceDataset::new(1, vec![vec![vec![1.0]]], vec![(0, 3)]).is_err());
        assert!(PreferenceDataset::new(2, vec![vec![vec![1.0]]], vec![]).is_err());
        assert!(PreferenceDataset::new(1, vec![vec![]], vec![]).is_err());
    }

    #[test]
    fn one_dimensional_chain_settles_on_the_preferred_sign() {
        // Only ±1 survive L1 normalization in 1-D; +1 explains the preference.
        let data = single_step(&[50.0, 0.0], vec![(0, 1)]);
        let cfg = McmcConfig { steps: 2_000, burn_in: 100, ..McmcConfig::default() };
        let post = mcmc_infer(&data, &cfg, names(1)).unwrap();
        assert_eq!(post.len(), 20);
        for h in post.hypotheses() {
            assert_eq!(h.weights, vec![1.0]);
            assert!((h.prob - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn uninformative_chain_accepts_everything() {
        let data = single_step(&[1.0, 2.0], vec![]);
        let mut data3 = data.clone();
        data3.feature_dim = 3;
        data3.trajectories = vec![vec![vec![1.0, 0.0, 2.0]], vec![vec![0.0, 1.0, 0.0]]];
        let cfg = McmcConfig { steps: 3_000, ..McmcConfig::default() };
        let chain = run_chain(&data3, &cfg).unwrap();
        assert_eq!(chain.acceptance_rate(), 1.0);
        for s in &chain.samples {
            assert!((s.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_rejects_bad_input() {
        let empty = PreferenceDataset { feature_dim: 2, trajectories: vec![], preferences: vec![] };
        assert!(matches!(run_chain(&empty, &McmcConfig::default()), Err(crate::Error::Inference(_))));
        let data = single_step(&[1.0, 2.0], vec![(1, 0)]);
        let cfg = McmcConfig { steps: 100, burn_in: 100, ..McmcConfig::default() };
        assert!(mcmc_infer(&data, &cfg, names(1)).is_err());
    }

    #[test]
    fn chain_is_deterministic_given_seed() {
        let data = single_step(&[1.0, 2.0, 0.5], vec![(1, 0), (0, 2)]);
        let cfg = McmcConfig { steps: 1_000, burn_in: 10, seed: 9, ..McmcConfig::default() };
        let a = mcmc_infer(&data, &cfg, names(1)).unwrap();
        let b = mcmc_infer(&data, &cfg, names(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn map_examples() {
        let chain = McmcChain { samples: vec![vec![0.2, 0.8]], log_likelihoods: vec![-4.0], accepted: 0 };
        assert_eq!(map_hypothesis(&chain).unwrap().weights, vec![0.2, 0.8]);
        let chain = McmcChain {
            samples: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            log_likelihoods: vec![-1.0, -2.0],
            accepted: 1,
        };
        assert_eq!(map_hypothesis(&chain).unwrap().weights, vec![1.0, 0.0]);
        let empty = McmcChain { samples: vec![], log_likelihoods: vec![], accepted: 0 };
        assert!(map_hypothesis(&empty).is_err());
    }

    #[test]
    fn mean_examples() {
        let one = RewardPosterior::new(
            names(2),
            vec![RewardHypothesis { weights: vec![0.3, -1.7], prob: 1.0 }],
        )
        .unwrap();
        assert_eq!(mean_hypothesis(&one), vec![0.3, -1.7]);
        let two = RewardPosterior::uniform(names(2), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(mean_hypothesis(&two), vec![0.5, 0.5]);
        let skew = RewardPosterior::new(
            names(2),
            vec![
                RewardHypothesis { weights: vec![1.0, 0.0], prob: 0.2 },
                RewardHypothesis { weights: vec![0.0, 1.0], prob: 0.8 },
            ],
        )
        .unwrap();
        let m = mean_hypothesis(&skew);
        assert!((m[0] - 0.2).abs() < 1e-15 && (m[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn posterior_validation() {
        let bad = RewardPosterior::new(
            names(1),
            vec![RewardHypothesis { weights: vec![1.0], prob: 0.4 }],
        );
        assert!(bad.is_err());
        assert!(RewardPosterior::new(names(1), vec![]).is_err());
        let mismatch = RewardPosterior::uniform(vec!["a".to_string()], vec![vec![1.0, 2.0]]);
        assert!(mismatch.is_err());
    }
}
