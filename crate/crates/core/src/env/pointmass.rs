use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::{continuous_action, count_feature, episode_not_over, Action, ActionSpace, EnvMetrics, EnvState, Environment, Rect};
use crate::error::bail;
use crate::{rng, Result};

/// Point robot navigating to a goal past gray regions of uncertain cost.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PointmassConfig {
    pub horizon: usize,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Drag coefficient `psi` in `[0, 1]`.
    pub drag: f64,
    /// Standard deviation of the Gaussian process noise on velocity.
    pub noise: f64,
    pub dt: f64,
    /// Each force component is clamped to `[-max_force, max_force]`.
    pub max_force: f64,
    pub gray: Vec<Rect>,
}

impl Default for PointmassConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            start: [-12.0, 0.0],
            goal: [0.0, 0.0],
            drag: 0.2,
            noise: 0.05,
            dt: 1.0,
            max_force: 1.0,
            gray: vec![Rect::new([-8.0, 0.0], [-4.0, 2.5]), Rect::new([-8.0, -2.5], [-4.0, 0.0])],
        }
    }
}

impl PointmassConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!(Param, "horizon must be positive");
        }
        if !(0.0..=1.0).contains(&self.drag) {
            bail!(Param, "drag must lie in [0, 1], got {}", self.drag);
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            bail!(Param, "noise must be non-negative, got {}", self.noise);
        }
        if !(self.dt > 0.0 && self.dt.is_finite() && self.max_force > 0.0 && self.max_force.is_finite()) {
            bail!(Param, "timestep and force bound must be positive");
        }
        for r in &self.gray {
            r.validate()?;
        }
        Ok(())
    }

    pub fn in_gray(&self, p: [f64; 2]) -> bool {
        self.gray.iter().any(|r| r.contains(p))
    }
}

/// Linear point-mass kinematics with drag:
/// `pos += vel * dt; vel = (1 - drag) * vel + force * dt + noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PointState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl PointState {
    pub fn advance(&mut self, force: [f64; 2], drag: f64, dt: f64, noise: [f64; 2]) {
        for d in 0..2 {
            self.pos[d] += self.vel[d] * dt;
            self.vel[d] = (1.0 - drag) * self.vel[d] + force[d] * dt + noise[d];
        }
    }
}

/// Observation `[x, y, vx, vy]`; features `[-|pos - goal|^2, 1_gray]`.
///
/// Hypothesis `w = [1, b]` gives the reward `-|pos - goal|^2 + b 1_gray`.
#[derive(Debug, Clone)]
pub struct Pointmass {
    config: PointmassConfig,
    state: PointState,
    noise: rng::Rng,
    t: usize,
    done: bool,
}

impl Pointmass {
    pub fn new(config: PointmassConfig) -> Result<Self> {
        config.validate()?;
        let state = PointState { pos: config.start, vel: [0.0; 2] };
        Ok(Self { config, state, noise: rng::seeded(0), t: 0, done: true })
    }

    pub fn config(&self) -> &PointmassConfig {
        &self.config
    }

    /// Feature vector of a position.
    pub fn features_at(&self, p: [f64; 2]) -> Vec<f64> {
        let dx = p[0] - self.config.goal[0];
        let dy = p[1] - self.config.goal[1];
        vec![-(dx * dx + dy * dy), if self.config.in_gray(p) { 1.0 } else { 0.0 }]
    }

    fn observe(&self, features: Vec<f64>) -> EnvState {
        let PointState { pos, vel } = self.state;
        EnvState { observation: vec![pos[0], pos[1], vel[0], vel[1]], done: self.done, terminated: false, features }
    }
}

impl Environment for Pointmass {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn feature_names(&self) -> Vec<String> {
        vec!["neg_sq_dist".to_string(), "gray".to_string()]
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.state = PointState { pos: self.config.start, vel: [0.0; 2] };
        self.noise = rng::seeded(seed);
        self.t = 0;
        self.done = false;
        self.observe(vec![0.0, 0.0])
    }

    fn step(&mut self, action: &Action) -> Result<EnvState> {
        episode_not_over(self.done)?;
        let force = continuous_action(action, 2, self.config.max_force)?;
        let mut z = [0.0; 2];
        if self.config.noise > 0.0 {
            let normal = Normal::new(0.0, self.config.noise).expect("validated noise");
            z = [normal.sample(&mut self.noise), normal.sample(&mut self.noise)];
        }
        self.state.advance(force, self.config.drag, self.config.dt, z);
        self.t += 1;
        self.done = self.t >= self.config.horizon;
        let phi = self.features_at(self.state.pos);
        Ok(self.observe(phi))
    }

    fn metrics(&self, episodes: &[&[Vec<f64>]]) -> EnvMetrics {
        EnvMetrics { gray_steps: Some(count_feature(episodes, 1)), ..EnvMetrics::default() }
    }
}
