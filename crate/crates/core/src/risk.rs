//! Risk measures over finite discrete distributions.
//!
//! All measures treat larger values as better: the tail of interest is the
//! low end of the distribution. CVaR is computed through the Rockafellar–Uryasev
//! dual, maximized by enumeration because the objective is piecewise linear
//! with breakpoints at the atoms.

use alloc::vec::Vec;

use crate::error::bail;
use crate::Result;

/// Tolerance on the total probability mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Finite set of `(value, probability)` atoms. Atoms may repeat and need not
/// be sorted.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            bail!(Param, "distribution must have at least one atom");
        }
        if values.len() != probs.len() {
            bail!(Param, "{} values but {} probabilities", values.len(), probs.len());
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            bail!(Param, "non-finite atom value {v}");
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            bail!(Param, "invalid probability {p}");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            bail!(Param, "probabilities sum to {total}, expected 1");
        }
        Ok(Self { values, probs })
    }

    /// Equal mass on every value.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len().max(1);
        let probs = alloc::vec![1.0 / n as f64; values.len()];
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same probabilities with every value mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&x| f(x)).collect(), self.probs.clone())
    }

    /// Atom indices sorted by ascending value (stable for ties).
    fn ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        idx
    }
}

/// Which risk measure the soft-robust objective blends with the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RiskMeasure {
    #[default]
    Cvar,
    Erm,
}

/// Risk level, blend weight, and measure of a soft-robust objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskParams {
    pub alpha: f64,
    pub lambda: f64,
    pub measure: RiskMeasure,
}

impl RiskParams {
    pub fn new(measure: RiskMeasure, alpha: f64, lambda: f64) -> Result<Self> {
        let p = Self { alpha, lambda, measure };
        p.validate()?;
        Ok(p)
    }

    pub fn cvar(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(RiskMeasure::Cvar, alpha, lambda)
    }

    pub fn erm(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(RiskMeasure::Erm, alpha, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            bail!(Param, "lambda must lie in [0, 1], got {}", self.lambda);
        }
        match self.measure {
            RiskMeasure::Cvar => check_cvar_alpha(self.alpha),
            RiskMeasure::Erm => check_erm_alpha(self.alpha),
        }
    }

    /// Risk value of `dist` under this measure.
    pub fn evaluate(&self, dist: &DiscreteDistribution) -> Result<f64> {
        match self.measure {
            RiskMeasure::Cvar => Ok(cvar(dist, self.alpha)?.value),
            RiskMeasure::Erm => erm(dist, self.alpha),
        }
    }
}

fn check_cvar_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        bail!(Param, "CVaR/VaR alpha must lie in [0, 1), got {alpha}");
    }
    Ok(())
}

fn check_erm_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        bail!(Param, "ERM alpha must be positive and finite, got {alpha}");
    }
    Ok(())
}

/// `sup{x : Pr(X >= x) >= alpha}` restricted to the atoms.
///
/// Atoms are visited in descending order while accumulating mass; an atom
/// whose own mass brings the upper-tail probability to `alpha` qualifies.
pub fn value_at_risk(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_cvar_alpha(alpha)?;
    let order = dist.ascending();
    let mut upper = 0.0;
    let mut k = order.len();
    while k > 0 {
        let x = dist.values[order[k - 1]];
        // All atoms sharing this value contribute to Pr(X >= x).
        while k > 0 && dist.values[order[k - 1]] == x {
            upper += dist.probs[order[k - 1]];
            k -= 1;
        }
        if upper >= alpha - 1e-12 {
            return Ok(x);
        }
    }
    Ok(dist.min())
}

/// Maximum of the Rockafellar–Uryasev objective and its maximizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cvar {
    pub value: f64,
    pub sigma_star: f64,
}

/// `sigma - 1/(1-alpha) * E[(sigma - X)_+]`.
pub fn rockafellar_objective(dist: &DiscreteDistribution, alpha: f64, sigma: f64) -> f64 {
    let shortfall: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .map(|(x, p)| p * (sigma - x).max(0.0))
        .sum();
    sigma - shortfall / (1.0 - alpha)
}

/// CVaR by enumerating every atom as a candidate `sigma`.
///
/// When several atoms attain the maximum (the lower-tail mass ends exactly on
/// an atom boundary) the smallest one is returned, so that the atoms with
/// `value <= sigma_star` are exactly the `1 - alpha` tail.
pub fn cvar(dist: &DiscreteDistribution, alpha: f64) -> Result<Cvar> {
    check_cvar_alpha(alpha)?;
    let mut best: Option<Cvar> = None;
    let objectives: Vec<(f64, f64)> = dist
        .values
        .iter()
        .map(|&s| (s, rockafellar_objective(dist, alpha, s)))
        .collect();
    let top = objectives.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * top.abs().max(1.0);
    for &(sigma, value) in &objectives {
        if value >= top - tol && best.is_none_or(|b| sigma < b.sigma_star) {
            best = Some(Cvar { value, sigma_star: sigma });
        }
    }
    best.ok_or_else(|| crate::Error::Param("empty distribution".into()))
}

/// Brute-force CVaR: mass-weighted mean of the lowest `1 - alpha` probability
/// mass, splitting the boundary atom.
pub fn cvar_oracle(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_cvar_alpha(alpha)?;
    let tail = 1.0 - alpha;
    let mut remaining = tail;
    let mut acc = 0.0;
    for i in dist.ascending() {
        if remaining <= 0.0 {
            break;
        }
        let take = dist.probs[i].min(remaining);
        acc += take * dist.values[i];
        remaining -= take;
    }
    Ok(acc / tail)
}

/// Line search for `sigma*` over the per-hypothesis returns.
pub fn solve_sigma(rhos: &[f64], probs: &[f64], alpha: f64) -> Result<f64> {
    let dist = DiscreteDistribution::new(rhos.to_vec(), probs.to_vec())?;
    Ok(cvar(&dist, alpha)?.sigma_star)
}

/// Entropic risk `-(1/alpha) log E[exp(-alpha X)]`.
///
/// Evaluated relative to the smallest supported atom `m` as
/// `m - log1p(sum p_i expm1(-alpha (x_i - m))) / alpha`, which neither
/// overflows for large `alpha * x` nor loses the small-`alpha` limit.
pub fn erm(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_erm_alpha(alpha)?;
    let m = supported_min(dist.values(), dist.probs());
    let total: f64 = dist.probs.iter().sum();
    let t: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, p)| (p / total) * libm::expm1(-alpha * (x - m)))
        .sum();
    Ok(m - libm::log1p(t) / alpha)
}

/// Normalized coefficients `p_i exp(-alpha rho_i) / sum_j p_j exp(-alpha rho_j)`.
pub fn erm_softmax_weights(rhos: &[f64], probs: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_erm_alpha(alpha)?;
    DiscreteDistribution::new(rhos.to_vec(), probs.to_vec())?;
    let m = supported_min(rhos, probs);
    let mut w: Vec<f64> = rhos
        .iter()
        .zip(probs)
        .map(|(r, p)| if *p > 0.0 { p * libm::exp(-alpha * (r - m)) } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    for c in &mut w {
        *c /= z;
    }
    Ok(w)
}

fn supported_min(values: &[f64], probs: &[f64]) -> f64 {
    values
        .iter()
        .zip(probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn d(values: &[f64], probs: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(values.to_vec(), probs.to_vec()).unwrap()
    }

    #[test]
    fn rejects_malformed_distributions() {
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![-0.5, 1.5]).is_err());
        assert!(DiscreteDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![3.0, 3.0], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn var_examples() {
        assert_eq!(value_at_risk(&d(&[7.0], &[1.0]), 0.3).unwrap(), 7.0);
        assert_eq!(value_at_risk(&d(&[-10.0, 0.0, 10.0], &[0.1, 0.4, 0.5]), 0.9).unwrap(), 0.0);
        assert_eq!(value_at_risk(&d(&[1.0, 2.0, 3.0, 4.0], &[0.25; 4]), 0.5).unwrap(), 3.0);
        // duplicates are pooled before the comparison
        assert_eq!(value_at_risk(&d(&[5.0, 1.0, 5.0], &[0.3, 0.4, 0.3]), 0.6).unwrap(), 5.0);
    }

    #[test]
    fn cvar_examples() {
        let c = cvar(&d(&[4.5], &[1.0]), 0.9).unwrap();
        assert_eq!((c.value, c.sigma_star), (4.5, 4.5));

        let dist = d(&[3.0, -1.0, 8.0], &[0.2, 0.5, 0.3]);
        let c = cvar(&dist, 0.0).unwrap();
        assert!((c.value - dist.mean()).abs() < 1e-12);
        assert_eq!(c.sigma_star, 8.0);

        let c = cvar(&d(&[1.0, 2.0, 3.0, 4.0], &[0.25; 4]), 0.5).unwrap();
        assert!((c.value - 1.5).abs() < 1e-12);
        assert_eq!(c.sigma_star, 2.0);
    }

    #[test]
    fn oracle_examples() {
        let o = cvar_oracle(&d(&[-10.0, 0.0, 10.0], &[0.1, 0.4, 0.5]), 0.9).unwrap();
        assert!((o + 10.0).abs() < 1e-9);
        let o = cvar_oracle(&d(&[1.0, 2.0, 3.0, 4.0], &[0.25; 4]), 0.5).unwrap();
        assert!((o - 1.5).abs() < 1e-12);
        assert!((cvar_oracle(&d(&[2.5], &[1.0]), 0.95).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn solve_sigma_examples() {
        assert_eq!(solve_sigma(&[5.0, 1.0], &[0.5, 0.5], 0.6).unwrap(), 1.0);
        assert_eq!(solve_sigma(&[3.0, 3.0], &[0.5, 0.5], 0.2).unwrap(), 3.0);
        assert_eq!(solve_sigma(&[1.0, 2.0, 3.0, 4.0], &[0.25; 4], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn alpha_ranges_are_enforced_per_measure() {
        let x = d(&[0.0, 1.0], &[0.5, 0.5]);
        assert!(cvar(&x, 1.0).is_err());
        assert!(cvar(&x, -0.1).is_err());
        assert!(value_at_risk(&x, 1.0).is_err());
        assert!(erm(&x, 0.0).is_err());
        assert!(erm(&x, -1.0).is_err());
        assert!(erm_softmax_weights(&[0.0], &[1.0], 0.0).is_err());
        assert!(RiskParams::cvar(0.95, 1.1).is_err());
        assert!(RiskParams::erm(2.0, 0.5).is_ok());
        assert!(RiskParams::cvar(2.0, 0.5).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn erm_examples() {
        assert!((erm(&d(&[3.0], &[1.0]), 7.0).unwrap() - 3.0).abs() < 1e-12);
        let two = d(&[0.0, 10.0], &[0.5, 0.5]);
        let direct = -libm::log(0.5 * (1.0 + libm::exp(-10.0)));
        assert!((erm(&two, 1.0).unwrap() - direct).abs() < 1e-12);
        assert!((erm(&two, 1.0).unwrap() - 0.69310).abs() < 1e-5);
        assert!((erm(&two, 1e-6).unwrap() - 5.0).abs() < 1e-3);
        // no overflow far outside exp's range
        let far = d(&[-1e6, 1e6], &[0.5, 0.5]);
        assert!(erm(&far, 1.0).unwrap().is_finite());
    }

    #[test]
    fn erm_softmax_examples() {
        let w = erm_softmax_weights(&[3.0, -2.0, 7.0], &[0.2, 0.3, 0.5], 1e-9).unwrap();
        for (c, p) in w.iter().zip([0.2, 0.3, 0.5]) {
            assert!((c - p).abs() < 1e-6);
        }
        let w = erm_softmax_weights(&[0.0, 10.0], &[0.5, 0.5], 1e3).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
        let w = erm_softmax_weights(&[4.0, 4.0], &[0.3, 0.7], 5.0).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] - 0.7).abs() < 1e-15);
    }
}
