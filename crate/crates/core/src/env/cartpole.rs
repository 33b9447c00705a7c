use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{episode_not_over, Action, ActionSpace, EnvMetrics, EnvState, Environment};
use crate::error::bail;
use crate::{rng, Result};

/// Classic-control cart-pole constants.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CartPoleConfig {
    pub horizon: usize,
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub dt: f64,
    /// Termination angle in radians.
    pub theta_limit: f64,
    pub x_limit: f64,
    /// Initial state components are drawn from `U(-init_range, init_range)`.
    pub init_range: f64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            theta_limit: 12.0 * 2.0 * core::f64::consts::PI / 360.0,
            x_limit: 2.4,
            init_range: 0.05,
        }
    }
}

impl CartPoleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!(Param, "horizon must be positive");
        }
        let positive = [self.cart_mass, self.pole_mass, self.half_length, self.dt, self.theta_limit, self.x_limit];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            bail!(Param, "cart-pole masses, lengths, timestep, and limits must be positive");
        }
        if !(self.init_range >= 0.0 && self.gravity.is_finite() && self.force.is_finite()) {
            bail!(Param, "invalid cart-pole constants");
        }
        Ok(())
    }
}

/// Cart-pole balancing with feature `phi = [x]`, the cart position.
///
/// Observation is `[x, x_dot, theta, theta_dot]`; actions are `0` (push left)
/// and `1` (push right).
#[derive(Debug, Clone)]
pub struct CartPole {
    config: CartPoleConfig,
    state: [f64; 4],
    t: usize,
    done: bool,
}

impl CartPole {
    pub fn new(config: CartPoleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, state: [0.0; 4], t: 0, done: true })
    }

    pub fn config(&self) -> &CartPoleConfig {
        &self.config
    }

    /// Place the system in an arbitrary state (tests and scripted rollouts).
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.t = 0;
        self.done = false;
    }

    fn observe(&self, features: Vec<f64>, terminated: bool) -> EnvState {
        EnvState { observation: self.state.to_vec(), done: self.done, terminated, features }
    }
}

impl Environment for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn feature_names(&self) -> Vec<String> {
        vec!["x".to_string()]
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = rng::seeded(seed);
        let r = self.config.init_range;
        for s in &mut self.state {
            *s = if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
        }
        self.t = 0;
        self.done = false;
        self.observe(vec![0.0], false)
    }

    fn step(&mut self, action: &Action) -> Result<EnvState> {
        episode_not_over(self.done)?;
        let push = match action {
            Action::Discrete(0) => -self.config.force,
            Action::Discrete(1) => self.config.force,
            other => bail!(Usage, "cart-pole actions are 0 or 1, got {other:?}"),
        };
        let c = &self.config;
        let [x, x_dot, theta, theta_dot] = self.state;
        let total_mass = c.cart_mass + c.pole_mass;
        let pole_moment = c.pole_mass * c.half_length;
        let (sin, cos) = (libm::sin(theta), libm::cos(theta));

        let temp = (push + pole_moment * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (c.gravity * sin - cos * temp)
            / (c.half_length * (4.0 / 3.0 - c.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;

        self.state = [
            x + c.dt * x_dot,
            x_dot + c.dt * x_acc,
            theta + c.dt * theta_dot,
            theta_dot + c.dt * theta_acc,
        ];
        self.t += 1;
        let [x, _, theta, _] = self.state;
        let terminated = x < -c.x_limit || x > c.x_limit || theta < -c.theta_limit || theta > c.theta_limit;
        self.done = terminated || self.t >= c.horizon;
        Ok(self.observe(vec![x], terminated))
    }

    fn metrics(&self, episodes: &[&[Vec<f64>]]) -> EnvMetrics {
        let (sum, n) = episodes
            .iter()
            .flat_map(|e| e.iter())
            .fold((0.0, 0usize), |(s, n), phi| (s + phi[0].abs(), n + 1));
        EnvMetrics { abs_x_mean: Some(sum / n.max(1) as f64), ..EnvMetrics::default() }
    }
}
