//! File formats: posterior, preference and checkpoint JSON, plus CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use broil_core::broil::{EpochLog, Trajectory};
use broil_core::env::{ActionSpace, EnvKind};
use broil_core::policy::{Policy, ValueNet};
use broil_core::posterior::{PreferenceDataset, RewardHypothesis, RewardPosterior};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const POSTERIOR_FORMAT: &str = "broil-posterior/1";
pub const PREFERENCES_FORMAT: &str = "broil-preferences/1";
pub const CHECKPOINT_FORMAT: &str = "broil-checkpoint/1";

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
}

fn check_format(path: &Path, found: &str, want: &str) -> Result<()> {
    if found != want {
        return Err(HarnessError::config(format!("{}: format {found:?}, expected {want:?}", path.display())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PosteriorFile {
    format: String,
    feature_dim: usize,
    num_hypotheses: usize,
    feature_names: Vec<String>,
    hypotheses: Vec<RewardHypothesis>,
}

pub fn write_posterior(path: &Path, posterior: &RewardPosterior) -> Result<()> {
    write_json(
        path,
        &PosteriorFile {
            format: POSTERIOR_FORMAT.into(),
            feature_dim: posterior.feature_dim(),
            num_hypotheses: posterior.len(),
            feature_names: posterior.feature_names().to_vec(),
            hypotheses: posterior.hypotheses().to_vec(),
        },
    )
}

pub fn read_posterior(path: &Path) -> Result<RewardPosterior> {
    let file: PosteriorFile = read_json(path)?;
    check_format(path, &file.format, POSTERIOR_FORMAT)?;
    if file.feature_names.len() != file.feature_dim || file.hypotheses.len() != file.num_hypotheses {
        return Err(HarnessError::config(format!("{}: shape header does not match contents", path.display())));
    }
    RewardPosterior::new(file.feature_names, file.hypotheses)
        .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PreferenceFile {
    format: String,
    num_trajectories: usize,
    num_preferences: usize,
    feature_names: Vec<String>,
    #[serde(flatten)]
    data: PreferenceDataset,
}

pub fn write_preferences(path: &Path, data: &PreferenceDataset, feature_names: &[String]) -> Result<()> {
    write_json(
        path,
        &PreferenceFile {
            format: PREFERENCES_FORMAT.into(),
            num_trajectories: data.trajectories.len(),
            num_preferences: data.preferences.len(),
            feature_names: feature_names.to_vec(),
            data: data.clone(),
        },
    )
}

/// Preference dataset and its feature names.
pub fn read_preferences(path: &Path) -> Result<(PreferenceDataset, Vec<String>)> {
    let file: PreferenceFile = read_json(path)?;
    check_format(path, &file.format, PREFERENCES_FORMAT)?;
    let bad = |msg: String| HarnessError::config(format!("{}: {msg}", path.display()));
    if file.data.trajectories.len() != file.num_trajectories
        || file.data.preferences.len() != file.num_preferences
        || file.feature_names.len() != file.data.feature_dim
    {
        return Err(bad("shape header does not match contents".into()));
    }
    file.data.validate().map_err(|e| bad(e.to_string()))?;
    Ok((file.data, file.feature_names))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "size", rename_all = "lowercase")]
pub enum SpaceSpec {
    Discrete(usize),
    Continuous(usize),
}

impl From<ActionSpace> for SpaceSpec {
    fn from(s: ActionSpace) -> Self {
        match s {
            ActionSpace::Discrete(n) => Self::Discrete(n),
            ActionSpace::Continuous(d) => Self::Continuous(d),
        }
    }
}

impl From<SpaceSpec> for ActionSpace {
    fn from(s: SpaceSpec) -> Self {
        match s {
            SpaceSpec::Discrete(n) => Self::Discrete(n),
            SpaceSpec::Continuous(d) => Self::Continuous(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSpec {
    pub heads: usize,
    pub params: Vec<f64>,
}

/// Trained networks plus enough metadata to rebuild them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub env: EnvKind,
    pub observation_dim: usize,
    pub action_space: SpaceSpec,
    pub hidden: Vec<usize>,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub policy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueSpec>,
}

impl Checkpoint {
    pub fn new(env: EnvKind, policy: &Policy, value: Option<&ValueNet>, lambda: f64, alpha: f64, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            env,
            observation_dim: policy.observation_dim(),
            action_space: policy.action_space().into(),
            hidden: policy.hidden().to_vec(),
            lambda,
            alpha,
            seed,
            policy: policy.params().to_vec(),
            value: value.map(|v| ValueSpec { heads: v.heads(), params: v.params().to_vec() }),
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        Ok(Policy::from_params(self.observation_dim, self.action_space.into(), &self.hidden, self.policy.clone())?)
    }

    pub fn value(&self) -> Result<Option<ValueNet>> {
        self.value
            .as_ref()
            .map(|v| ValueNet::from_params(self.observation_dim, v.heads, &self.hidden, v.params.clone()))
            .transpose()
            .map_err(Into::into)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        check_format(path, &c.format, CHECKPOINT_FORMAT)?;
        c.policy().map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        c.value().map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        Ok(c)
    }
}

/// Shortest round-trip decimal form; empty for missing values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
}

/// Per-epoch training log: headline numbers, per-hypothesis returns,
/// environment metrics and optimizer statistics.
pub fn training_log_csv(log: &[EpochLog], hypotheses: usize) -> Result<Vec<u8>> {
    let mut header: Vec<String> =
        ["epoch", "mean_expected_return", "cvar_or_erm", "sigma_star"].iter().map(|s| s.to_string()).collect();
    header.extend((0..hypotheses).map(|i| format!("rho_{i}")));
    header.extend(
        ["|x|_mean", "gray_steps", "trash", "steps", "episodes", "policy_steps", "approx_kl", "value_loss"]
            .iter()
            .map(|s| s.to_string()),
    );
    let rows = log.iter().map(|l| {
        let mut row = vec![
            l.epoch.to_string(),
            l.expected_return.to_string(),
            l.risk_value.to_string(),
            fmt_opt(l.sigma_star),
        ];
        row.extend(l.rho.iter().map(f64::to_string));
        row.extend([
            fmt_opt(l.metrics.abs_x_mean),
            fmt_opt(l.metrics.gray_steps),
            fmt_opt(l.metrics.trash),
            l.steps.to_string(),
            l.episodes.to_string(),
            l.stats.policy_steps.to_string(),
            l.stats.approx_kl.to_string(),
            fmt_opt(l.stats.value_loss),
        ]);
        row
    });
    csv_bytes(&header, rows)
}

/// One row per step: episode index, time, observation, action and feature
/// components.
pub fn trajectories_csv(trajectories: &[Trajectory]) -> Result<Vec<u8>> {
    let first = trajectories.iter().find(|t| !t.is_empty());
    let dims = first.map_or((0, 0, 0), |t| (t.observations[0].len(), t.actions[0].components().len(), t.features[0].len()));
    let mut header = vec!["episode".to_string(), "t".to_string()];
    header.extend((0..dims.0).map(|i| format!("obs_{i}")));
    header.extend((0..dims.1).map(|i| format!("act_{i}")));
    header.extend((0..dims.2).map(|i| format!("phi_{i}")));
    let mut rows = Vec::new();
    for (e, traj) in trajectories.iter().enumerate() {
        for t in 0..traj.len() {
            let mut row = vec![e.to_string(), t.to_string()];
            row.extend(traj.observations[t].iter().map(f64::to_string));
            row.extend(traj.actions[t].components().iter().map(f64::to_string));
            row.extend(traj.features[t].iter().map(f64::to_string));
            rows.push(row);
        }
    }
    csv_bytes(&header, rows)
}

pub(crate) fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    csv_bytes(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>(), rows)
}
