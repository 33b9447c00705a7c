//! Scripted waypoint controllers that stand in for teleoperated TrashBot
//! demonstrations.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Action, EnvKind, Environment, TrashBot, TrashBotConfig};
use crate::error::bail;
use crate::posterior::{dot, feature_counts, PreferenceDataset};
use crate::{rng, Result};

/// Which demonstration pairs to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DemoVariant {
    /// All three pairs.
    #[default]
    All,
    /// Trash collecting preferred over idling.
    TrashVsIdle,
    /// Loitering in white preferred over loitering in gray.
    WhiteVsGray,
    /// More trash and less gray preferred over less trash and more gray.
    TradeOff,
}

const GAIN_P: f64 = 10.0;
const GAIN_D: f64 = 4.0;

/// Where the controller steers next, given `(t, position, trash)`.
type Plan<'a> = dyn FnMut(usize, [f64; 2], [f64; 2]) -> Option<[f64; 2]> + 'a;

/// Roll out one episode under a PD controller tracking the plan's waypoints.
/// `None` from the plan means apply no force.
fn rollout(env: &mut TrashBot, seed: u64, plan: &mut Plan<'_>) -> Result<Vec<Vec<f64>>> {
    env.reset(seed);
    let mut features = Vec::with_capacity(env.horizon());
    for t in 0..env.horizon() {
        let (pos, vel) = (env.position(), env.velocity());
        let force = match plan(t, pos, env.trash()) {
            Some(target) => vec![
                GAIN_P * (target[0] - pos[0]) - GAIN_D * vel[0],
                GAIN_P * (target[1] - pos[1]) - GAIN_D * vel[1],
            ],
            None => vec![0.0, 0.0],
        };
        let s = env.step(&Action::Continuous(force))?;
        features.push(s.features);
        if s.done {
            break;
        }
    }
    Ok(features)
}

fn chase(_: usize, _: [f64; 2], trash: [f64; 2]) -> Option<[f64; 2]> {
    Some(trash)
}

/// Half-widths of the white square and of the arena.
fn extents(config: &TrashBotConfig) -> (f64, f64) {
    (config.white.max[0], config.arena.max[0])
}

fn pair(env: &mut TrashBot, seed: u64, variant: DemoVariant) -> Result<[Vec<Vec<f64>>; 2]> {
    let (inner, outer) = extents(env.config());
    let gray_spot = [0.5 * (inner + outer), 0.0];
    Ok(match variant {
        DemoVariant::TrashVsIdle => {
            [rollout(env, seed, &mut chase)?, rollout(env, seed, &mut |_, _, _| None)?]
        }
        DemoVariant::WhiteVsGray => [
            rollout(env, seed, &mut |_, _, _| Some([0.0, -0.5 * inner]))?,
            rollout(env, seed, &mut |_, _, _| Some(gray_spot))?,
        ],
        DemoVariant::TradeOff => [
            rollout(env, seed, &mut |t, _, trash| if t < 20 { Some(gray_spot) } else { Some(trash) })?,
            rollout(env, seed, &mut |t, _, trash| if t < 60 { Some(gray_spot) } else { Some(trash) })?,
        ],
        DemoVariant::All => unreachable!("expanded by the caller"),
    })
}

/// Generate labelled demonstration pairs. Trajectory `2k` is preferred over
/// trajectory `2k + 1`.
pub fn scripted_demos(kind: EnvKind, variant: DemoVariant, seed: u64) -> Result<PreferenceDataset> {
    if kind != EnvKind::TrashBot {
        bail!(Param, "scripted demonstrations exist only for trashbot, not {}", kind.name());
    }
    let variants = match variant {
        DemoVariant::All => vec![DemoVariant::TrashVsIdle, DemoVariant::WhiteVsGray, DemoVariant::TradeOff],
        v => vec![v],
    };
    let mut env = TrashBot::new(TrashBotConfig::default())?;
    let mut trajectories = Vec::new();
    let mut preferences = Vec::new();
    for (k, v) in variants.iter().enumerate() {
        let [better, worse] = pair(&mut env, seed.wrapping_add(k as u64), *v)?;
        preferences.push((trajectories.len(), trajectories.len() + 1));
        trajectories.push(better);
        trajectories.push(worse);
    }
    PreferenceDataset::new(3, trajectories, preferences)
}

/// Uniform point in a white, gray or neutral-corner area, each kind equally
/// likely.
fn random_waypoint(rng: &mut rng::Rng, config: &TrashBotConfig) -> [f64; 2] {
    let (w, o) = extents(config);
    let side = |rng: &mut rng::Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let inner = |rng: &mut rng::Rng| rng.random_range(-0.8 * w..0.8 * w);
    let outer = |rng: &mut rng::Rng| rng.random_range(w + 0.25 * (o - w)..w + 0.875 * (o - w));
    match rng.random_range(0..3) {
        0 => [inner(rng), inner(rng)],
        1 if rng.random_bool(0.5) => [side(rng) * outer(rng), inner(rng)],
        1 => [inner(rng), side(rng) * outer(rng)],
        _ => [side(rng) * outer(rng), side(rng) * outer(rng)],
    }
}

/// `n` TrashBot trajectories from randomized waypoint scripts: each episode
/// visits random waypoints in every kind of area, then chases trash from a
/// random step on.
pub fn random_scripted_rollouts(n: usize, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut env = TrashBot::new(TrashBotConfig::default())?;
    let mut rng = rng::stream(seed, rng::Stream::Demos);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let waypoints: Vec<[f64; 2]> = (0..4).map(|_| random_waypoint(&mut rng, env.config())).collect();
        let chase_from: usize = rng.random_range(0..=100);
        let episode_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let traj = rollout(&mut env, episode_seed, &mut |t, _, trash| {
            if t >= chase_from {
                Some(trash)
            } else {
                Some(waypoints[t / 25 % waypoints.len()])
            }
        })?;
        out.push(traj);
    }
    Ok(out)
}

/// Label every pair of trajectories by their return under `w`; ties are
/// skipped.
pub fn label_all_pairs(trajectories: Vec<Vec<Vec<f64>>>, w: &[f64]) -> Result<PreferenceDataset> {
    let returns: Vec<f64> =
        trajectories.iter().map(|t| feature_counts(t).map(|mu| dot(w, &mu))).collect::<Result<_>>()?;
    let mut preferences = Vec::new();
    for i in 0..returns.len() {
        for j in i + 1..returns.len() {
            if returns[i] > returns[j] {
                preferences.push((i, j));
            } else if returns[j] > returns[i] {
                preferences.push((j, i));
            }
        }
    }
    PreferenceDataset::new(w.len(), trajectories, preferences)
}
