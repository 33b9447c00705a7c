use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::pointmass::PointState;
use super::{continuous_action, count_feature, episode_not_over, Action, ActionSpace, EnvMetrics, EnvState, Environment, Rect};
use crate::error::bail;
use crate::{rng, Result};

/// Deterministic point robot that picks up trash in a white region bordered
/// by gray strips; the corners of the arena are neither.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrashBotConfig {
    pub horizon: usize,
    pub start: [f64; 2],
    pub drag: f64,
    pub dt: f64,
    pub max_force: f64,
    /// Walls: positions are clamped to this rectangle.
    pub arena: Rect,
    pub white: Rect,
    pub gray: Vec<Rect>,
    pub pickup_radius: f64,
}

impl Default for TrashBotConfig {
    fn default() -> Self {
        let (outer, inner) = (0.4, 0.25);
        Self {
            horizon: 100,
            start: [0.0, 0.0],
            drag: 0.2,
            dt: 0.1,
            max_force: 1.0,
            arena: Rect::new([-outer, -outer], [outer, outer]),
            white: Rect::new([-inner, -inner], [inner, inner]),
            gray: vec![
                Rect::new([-inner, inner], [inner, outer]),
                Rect::new([-inner, -outer], [inner, -inner]),
                Rect::new([-outer, -inner], [-inner, inner]),
                Rect::new([inner, -inner], [outer, inner]),
            ],
            pickup_radius: 0.05,
        }
    }
}

impl TrashBotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!(Param, "horizon must be positive");
        }
        if !(0.0..=1.0).contains(&self.drag) {
            bail!(Param, "drag must lie in [0, 1], got {}", self.drag);
        }
        if !(self.dt > 0.0 && self.max_force > 0.0 && self.pickup_radius > 0.0) {
            bail!(Param, "timestep, force bound, and pickup radius must be positive");
        }
        self.arena.validate()?;
        self.white.validate()?;
        for r in &self.gray {
            r.validate()?;
        }
        if !self.arena.contains(self.start) {
            bail!(Param, "start {:?} lies outside the arena", self.start);
        }
        Ok(())
    }

    pub fn in_gray(&self, p: [f64; 2]) -> bool {
        self.gray.iter().any(|r| r.contains(p))
    }

    /// Strictly white: inside the white rectangle and in no gray rectangle.
    pub fn in_white(&self, p: [f64; 2]) -> bool {
        self.white.contains(p) && !self.in_gray(p)
    }
}

/// Observation `[x, y, vx, vy, trash_x, trash_y, trash_x - x, trash_y - y]`; features
/// `[GRAY, WHITE, TRASH]` where TRASH fires on the step of a pickup.
#[derive(Debug, Clone)]
pub struct TrashBot {
    config: TrashBotConfig,
    state: PointState,
    trash: [f64; 2],
    spawner: rng::Rng,
    t: usize,
    done: bool,
}

impl TrashBot {
    pub fn new(config: TrashBotConfig) -> Result<Self> {
        config.validate()?;
        let state = PointState { pos: config.start, vel: [0.0; 2] };
        Ok(Self { trash: config.start, config, state, spawner: rng::seeded(0), t: 0, done: true })
    }

    pub fn config(&self) -> &TrashBotConfig {
        &self.config
    }

    pub fn trash(&self) -> [f64; 2] {
        self.trash
    }

    pub fn position(&self) -> [f64; 2] {
        self.state.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.state.vel
    }

    fn spawn_trash(&mut self) -> [f64; 2] {
        let w = self.config.white;
        loop {
            let p = [
                self.spawner.random_range(w.min[0]..w.max[0]),
                self.spawner.random_range(w.min[1]..w.max[1]),
            ];
            if self.config.in_white(p) {
                return p;
            }
        }
    }

    pub fn features_at(&self, p: [f64; 2], picked: bool) -> Vec<f64> {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        vec![ind(self.config.in_gray(p)), ind(self.config.in_white(p)), ind(picked)]
    }

    fn observe(&self, features: Vec<f64>) -> EnvState {
        let PointState { pos, vel } = self.state;
        EnvState {
            observation: vec![
                pos[0],
                pos[1],
                vel[0],
                vel[1],
                self.trash[0],
                self.trash[1],
                self.trash[0] - pos[0],
                self.trash[1] - pos[1],
            ],
            done: self.done,
            terminated: false,
            features,
        }
    }
}

impl Environment for TrashBot {
    fn observation_dim(&self) -> usize {
        8
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn feature_names(&self) -> Vec<String> {
        vec!["gray".to_string(), "white".to_string(), "trash".to_string()]
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.state = PointState { pos: self.config.start, vel: [0.0; 2] };
        self.spawner = rng::seeded(seed);
        self.trash = self.spawn_trash();
        self.t = 0;
        self.done = false;
        self.observe(vec![0.0; 3])
    }

    fn step(&mut self, action: &Action) -> Result<EnvState> {
        episode_not_over(self.done)?;
        let force = continuous_action(action, 2, self.config.max_force)?;
        self.state.advance(force, self.config.drag, self.config.dt, [0.0; 2]);
        let arena = self.config.arena;
        for d in 0..2 {
            let clamped = self.state.pos[d].clamp(arena.min[d], arena.max[d]);
            if clamped != self.state.pos[d] {
                self.state.pos[d] = clamped;
                self.state.vel[d] = 0.0;
            }
        }
        let pos = self.state.pos;
        let (dx, dy) = (pos[0] - self.trash[0], pos[1] - self.trash[1]);
        let picked = libm::sqrt(dx * dx + dy * dy) <= self.config.pickup_radius;
        let phi = self.features_at(pos, picked);
        if picked {
            self.trash = self.spawn_trash();
        }
        self.t += 1;
        self.done = self.t >= self.config.horizon;
        Ok(self.observe(phi))
    }

    fn metrics(&self, episodes: &[&[Vec<f64>]]) -> EnvMetrics {
        EnvMetrics {
            gray_steps: Some(count_feature(episodes, 0)),
            trash: Some(count_feature(episodes, 2)),
            ..EnvMetrics::default()
        }
    }
}
