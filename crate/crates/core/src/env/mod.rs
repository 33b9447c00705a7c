//! Benchmark environments with linear reward features.
//!
//! Every environment reports a feature vector `phi` for each transition,
//! computed on the state reached by the step. Rewards are never computed
//! here; a reward hypothesis `w` turns features into reward as `w · phi`.

mod cartpole;
pub mod demos;
mod pointmass;
mod trashbot;

use alloc::string::String;
use alloc::vec::Vec;

pub use cartpole::{CartPole, CartPoleConfig};
pub use pointmass::{Pointmass, PointmassConfig};
pub use trashbot::{TrashBot, TrashBotConfig};

use crate::error::bail;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Flat numeric view used for trajectory export.
    pub fn components(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => alloc::vec![*a as f64],
            Action::Continuous(a) => a.clone(),
        }
    }
}

/// Observation after a reset or step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    /// Episode over, either by termination or by reaching the horizon.
    pub done: bool,
    /// True only when the episode ended for a reason other than the horizon.
    pub terminated: bool,
    /// Features of the transition that produced this state (zeros after reset).
    pub features: Vec<f64>,
}

/// Axis-aligned rectangle `[min.0, max.0] x [min.1, max.1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min[0] < self.max[0] && self.min[1] < self.max[1]) {
            bail!(Param, "rectangle {:?}..{:?} is not well formed", self.min, self.max);
        }
        Ok(())
    }
}

/// Per-episode summary statistics used in evaluation reports.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvMetrics {
    /// Mean `|x|` of the cart over all steps (CartPole).
    pub abs_x_mean: Option<f64>,
    /// Average number of steps spent in a gray region per episode.
    pub gray_steps: Option<f64>,
    /// Average number of trash pickups per episode (TrashBot).
    pub trash: Option<f64>,
}

/// Episodic environment contract.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn feature_names(&self) -> Vec<String>;
    fn horizon(&self) -> usize;
    /// Start a new episode; deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> EnvState;
    /// Advance one step. Errors if the episode is over.
    fn step(&mut self, action: &Action) -> Result<EnvState>;

    fn feature_dim(&self) -> usize {
        self.feature_names().len()
    }

    /// Summary metrics over episodes given as per-step feature sequences.
    fn metrics(&self, episodes: &[&[Vec<f64>]]) -> EnvMetrics;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EnvKind {
    CartPole,
    Pointmass,
    TrashBot,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::CartPole => "cartpole",
            EnvKind::Pointmass => "pointmass",
            EnvKind::TrashBot => "trashbot",
        }
    }
}

/// Configuration of any supported environment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum EnvConfig {
    CartPole(CartPoleConfig),
    Pointmass(PointmassConfig),
    TrashBot(TrashBotConfig),
}

impl EnvConfig {
    pub fn default_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::CartPole => Self::CartPole(CartPoleConfig::default()),
            EnvKind::Pointmass => Self::Pointmass(PointmassConfig::default()),
            EnvKind::TrashBot => Self::TrashBot(TrashBotConfig::default()),
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Self::CartPole(_) => EnvKind::CartPole,
            Self::Pointmass(_) => EnvKind::Pointmass,
            Self::TrashBot(_) => EnvKind::TrashBot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CartPole(c) => c.validate(),
            Self::Pointmass(c) => c.validate(),
            Self::TrashBot(c) => c.validate(),
        }
    }

    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            Self::CartPole(c) => Env::CartPole(CartPole::new(c.clone())?),
            Self::Pointmass(c) => Env::Pointmass(Pointmass::new(c.clone())?),
            Self::TrashBot(c) => Env::TrashBot(TrashBot::new(c.clone())?),
        })
    }
}

/// Any supported environment, dispatched statically.
#[derive(Debug, Clone)]
pub enum Env {
    CartPole(CartPole),
    Pointmass(Pointmass),
    TrashBot(TrashBot),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Env::CartPole($e) => $body,
            Env::Pointmass($e) => $body,
            Env::TrashBot($e) => $body,
        }
    };
}

impl Environment for Env {
    fn observation_dim(&self) -> usize {
        dispatch!(self, e => e.observation_dim())
    }
    fn action_space(&self) -> ActionSpace {
        dispatch!(self, e => e.action_space())
    }
    fn feature_names(&self) -> Vec<String> {
        dispatch!(self, e => e.feature_names())
    }
    fn horizon(&self) -> usize {
        dispatch!(self, e => e.horizon())
    }
    fn reset(&mut self, seed: u64) -> EnvState {
        dispatch!(self, e => e.reset(seed))
    }
    fn step(&mut self, action: &Action) -> Result<EnvState> {
        dispatch!(self, e => e.step(action))
    }
    fn metrics(&self, episodes: &[&[Vec<f64>]]) -> EnvMetrics {
        dispatch!(self, e => e.metrics(episodes))
    }
}

fn continuous_action(action: &Action, dim: usize, bound: f64) -> Result<[f64; 2]> {
    match action {
        Action::Continuous(a) if a.len() == dim && a.iter().all(|x| x.is_finite()) => {
            Ok([a[0].clamp(-bound, bound), a[1].clamp(-bound, bound)])
        }
        other => bail!(Usage, "expected a finite {dim}-D force, got {other:?}"),
    }
}

fn episode_not_over(done: bool) -> Result<()> {
    if done {
        bail!(Usage, "episode is over; call reset before stepping");
    }
    Ok(())
}

fn count_feature(episodes: &[&[Vec<f64>]], index: usize) -> f64 {
    let total: f64 = episodes.iter().flat_map(|e| e.iter()).map(|phi| phi[index]).sum();
    total / episodes.len().max(1) as f64
}
