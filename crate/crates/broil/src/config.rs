//! Experiment configuration files (TOML).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use broil_core::broil::{Algorithm, OptimizerConfig};
use broil_core::env::demos::DemoVariant;
use broil_core::env::{EnvConfig, EnvKind};
use broil_core::posterior::{McmcConfig, RewardHypothesis};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Default λ grid for sweeps.
pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorSource {
    /// Built-in prior or demonstration posterior for the environment.
    Preset,
    /// Hypotheses listed inline.
    Table,
    /// Posterior JSON file.
    File,
    /// MCMC over a preference dataset (file or scripted demonstrations).
    Preferences,
}

/// Optional reduction of the posterior to a single hypothesis, for baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Collapse {
    #[default]
    None,
    /// Posterior-mean reward with probability 1.
    Mean,
    /// Most likely reward: highest-likelihood chain state for preference
    /// posteriors, otherwise the most probable hypothesis.
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDemos {
    #[serde(default)]
    pub variant: DemoVariant,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorConfig {
    pub source: PosteriorSource,
    #[serde(default)]
    pub collapse: Collapse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<Vec<RewardHypothesis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demos: Option<ScriptedDemos>,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl PosteriorConfig {
    pub fn preset() -> Self {
        Self::of(PosteriorSource::Preset)
    }

    pub fn of(source: PosteriorSource) -> Self {
        Self {
            source,
            collapse: Collapse::None,
            feature_names: None,
            hypotheses: None,
            path: None,
            demos: None,
            mcmc: McmcConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (table, path, demos) = (self.hypotheses.is_some(), self.path.is_some(), self.demos.is_some());
        let ok = match self.source {
            PosteriorSource::Preset => !table && !path && !demos,
            PosteriorSource::Table => table && !path && !demos,
            PosteriorSource::File => !table && path && !demos,
            PosteriorSource::Preferences => !table && (path != demos),
        };
        if !ok {
            return Err(HarnessError::config(format!(
                "posterior source {:?} needs exactly its own fields (table: hypotheses, file: path, preferences: path or demos)",
                self.source
            )));
        }
        if let Some(h) = &self.hypotheses {
            let total: f64 = h.iter().map(|h| h.prob).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(HarnessError::config(format!("hypothesis probabilities sum to {total}, expected 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(HarnessError::config("sweep lists must be nonempty"));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(HarnessError::config("sweep seeds must be distinct"));
        }
        Ok(())
    }

    /// Cells in sweep order: λ outermost, then α, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.lambdas.len() * self.alphas.len() * self.seeds.len());
        for &lambda in &self.lambdas {
            for &alpha in &self.alphas {
                for &seed in &self.seeds {
                    out.push(Cell { lambda, alpha, seed });
                }
            }
        }
        out
    }
}

/// One `(λ, α, seed)` point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Cell {
    /// File-name stem for this cell's outputs.
    pub fn tag(&self) -> String {
        format!("l{}_a{}_s{}", self.lambda, self.alpha, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub episodes: usize,
    /// Reward weights scored alongside the posterior, if known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { episodes: 100, ground_truth: None }
    }
}

impl ExperimentConfig {
    /// Built-in defaults for each environment.
    pub fn preset(kind: EnvKind) -> Self {
        let alpha = match kind {
            EnvKind::Pointmass => 0.96,
            _ => 0.95,
        };
        let mut optimizer = match kind {
            EnvKind::CartPole => {
                OptimizerConfig { epochs: 100, algorithm: Algorithm::Vanilla, policy_lr: 1e-2, ..Default::default() }
            }
            EnvKind::Pointmass | EnvKind::TrashBot => {
                OptimizerConfig { epochs: 50, algorithm: Algorithm::Ppo, policy_lr: 3e-4, ..Default::default() }
            }
        };
        optimizer.risk.alpha = alpha;
        Self {
            output_dir: PathBuf::from("runs").join(kind.name()),
            env: EnvConfig::default_for(kind),
            posterior: PosteriorConfig::preset(),
            optimizer,
            sweep: SweepConfig { lambdas: DEFAULT_LAMBDAS.to_vec(), alphas: vec![alpha], seeds: vec![0, 1, 2] },
            evaluation: EvaluationConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Load a config file. Relative posterior paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&config.posterior.path, path.parent()) {
            if p.is_relative() {
                config.posterior.path = Some(dir.join(p));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let core = |e: broil_core::Error| HarnessError::config(e.to_string());
        self.env.validate().map_err(core)?;
        self.posterior.validate()?;
        self.optimizer.validate().map_err(core)?;
        self.sweep.validate()?;
        if self.evaluation.episodes == 0 {
            return Err(HarnessError::config("evaluation needs at least one episode"));
        }
        for cell in self.sweep.cells() {
            let mut risk = self.optimizer.risk;
            risk.lambda = cell.lambda;
            risk.alpha = cell.alpha;
            risk.validate().map_err(core)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in [EnvKind::CartPole, EnvKind::Pointmass, EnvKind::TrashBot] {
            let c = ExperimentConfig::preset(kind);
            c.validate().unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        }
    }

    #[test]
    fn cells_are_cartesian() {
        let s = SweepConfig { lambdas: vec![0.0, 0.5, 1.0], alphas: vec![0.95], seeds: vec![3, 4] };
        let cells = s.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], Cell { lambda: 0.0, alpha: 0.95, seed: 4 });
        assert_eq!(cells[5].tag(), "l1_a0.95_s4");
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let s = SweepConfig { lambdas: vec![1.0], alphas: vec![0.95], seeds: vec![1, 1] };
        assert!(s.validate().is_err());
    }

    #[test]
    fn mixed_sources_rejected() {
        let mut p = PosteriorConfig::of(PosteriorSource::File);
        assert!(p.validate().is_err());
        p.path = Some("post.json".into());
        p.validate().unwrap();
        p.demos = Some(ScriptedDemos::default());
        assert!(p.validate().is_err());
    }
}
