//! Deterministic toy manipulation environments.
//!
//! Environments are stateless: `reset` returns a state vector and `step` maps
//! (state, action) to the next state and its feature record. The last state
//! component is always the step counter. Episodes always run the full horizon;
//! `done` is reported only when the horizon is reached.
//!
//! The hidden ground-truth reward lives behind [`GroundTruth`], a separate
//! trait that the learner never receives.

mod drawer;
mod pick_carry;
mod point_reach;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::StageRule;
use crate::reward::{FeatureRecord, FeatureSchema, Trajectory};
use crate::TrajId;

pub use drawer::DrawerPull;
pub use pick_carry::PickCarry;
pub use point_reach::PointReach;

pub const ENV_NAMES: [&str; 3] = ["point-reach", "pick-carry", "drawer-pull-1d"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Real,
    Bool,
}

#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: &'static str,
    pub task_description: &'static str,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
    pub features: FeatureSchema,
    pub feature_kinds: Vec<FeatureKind>,
    pub success_description: &'static str,
    pub stages: Vec<StageRule>,
    /// Built-in reward spec used when a run does not name one.
    pub default_reward: &'static str,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| if a.is_nan() { 0.0 } else { a.clamp(*lo, *hi) })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub features: FeatureRecord,
    pub done: bool,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Initial state drawn from the environment's start distribution.
    fn reset(&self, seed: u64) -> Vec<f64>;

    /// Apply `action` (clipped to bounds) to `state`.
    fn step(&self, state: &[f64], action: &[f64]) -> Step;

    /// Policy input for `state`.
    fn observe(&self, state: &[f64]) -> Vec<f64>;

    /// Success predicate on a final state.
    fn is_success(&self, state: &[f64]) -> bool;

    fn success(&self, trajectory: &Trajectory) -> bool {
        self.is_success(trajectory.final_state())
    }
}

/// Hidden per-step reward used only for evaluation and analysis.
pub trait GroundTruth: Send + Sync {
    fn ground_truth_reward(&self, state: &[f64]) -> f64;

    /// Bonus on the final state of a successful episode.
    fn success_bonus(&self) -> f64;
}

pub fn ground_truth_return(
    env: &dyn Environment,
    truth: &dyn GroundTruth,
    trajectory: &Trajectory,
) -> f64 {
    let mut total: f64 = trajectory
        .states()
        .iter()
        .map(|s| truth.ground_truth_reward(s))
        .sum();
    if env.success(trajectory) {
        total += truth.success_bonus();
    }
    total
}

/// Run one full-horizon episode, choosing actions with `act(observation)`.
pub fn run_episode(
    env: &dyn Environment,
    seed: u64,
    id: TrajId,
    mut act: impl FnMut(&[f64]) -> Vec<f64>,
) -> Trajectory {
    let spec = env.spec();
    let mut state = env.reset(seed);
    let mut states = Vec::with_capacity(spec.horizon);
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut features = Vec::with_capacity(spec.horizon);
    loop {
        let obs = env.observe(&state);
        let action = spec.clip_action(&act(&obs));
        let step = env.step(&state, &action);
        state = step.state;
        states.push(state.clone());
        actions.push(action);
        features.push(step.features);
        if step.done {
            break;
        }
    }
    let success = env.is_success(&state);
    Trajectory::new(id, states, actions, features, success).expect("horizon >= 1")
}

pub fn make_env(name: &str) -> Result<Arc<dyn Environment>> {
    Ok(match name {
        "point-reach" => Arc::new(PointReach::default()),
        "pick-carry" => Arc::new(PickCarry::default()),
        "drawer-pull-1d" => Arc::new(DrawerPull::default()),
        _ => return Err(Error::UnknownEnv(name.to_string())),
    })
}

pub fn make_ground_truth(name: &str) -> Result<Box<dyn GroundTruth>> {
    Ok(match name {
        "point-reach" => Box::new(PointReach::default()),
        "pick-carry" => Box::new(PickCarry::default()),
        "drawer-pull-1d" => Box::new(DrawerPull::default()),
        _ => return Err(Error::UnknownEnv(name.to_string())),
    })
}

pub(crate) fn step_counter(state: &[f64]) -> usize {
    *state.last().expect("state carries a step counter") as usize
}

/// Action scale shared by the environments: one unit of action moves 0.05.
pub(crate) const STEP_SCALE: f64 = 0.05;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::classify;
    use crate::reward::builtin_spec;
    use crate::seed;
    use rand::Rng as _;

    fn random_rollout(env: &dyn Environment, s: u64, id: u64) -> Trajectory {
        let mut rng = seed::derived_rng(s, "random-policy", id);
        let dim = env.spec().action_dim;
        run_episode(env, s, TrajId(id), |_| {
            (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        })
    }

    #[test]
    fn reset_is_deterministic() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            assert_eq!(env.reset(42), env.reset(42), "{name}");
            assert_ne!(env.reset(1), env.reset(2), "{name}");
        }
    }

    #[test]
    fn rollouts_are_deterministic_and_complete() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let a = random_rollout(env.as_ref(), 3, 0);
            let b = random_rollout(env.as_ref(), 3, 0);
            assert_eq!(a, b);
            assert_eq!(a.horizon(), env.spec().horizon);
            for (t, rec) in a.features().iter().enumerate() {
                assert_eq!(rec.step(), t);
                assert_eq!(rec.names(), &env.spec().features[..], "{name}");
            }
        }
    }

    #[test]
    fn unknown_env_is_named() {
        let err = make_env("warp-drive").err().unwrap();
        assert!(err.to_string().contains("warp-drive"));
    }

    #[test]
    fn schemas_cover_default_specs() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let spec = builtin_spec(env.spec().default_reward).unwrap();
            assert!(
                spec.unknown_features(&env.spec().features).is_empty(),
                "{name}"
            );
        }
        let pc = make_env("pick-carry").unwrap();
        let chair = builtin_spec("push-chair").unwrap();
        assert!(chair.unknown_features(&pc.spec().features).is_empty());
    }

    #[test]
    fn every_random_step_matches_exactly_one_stage() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let mut checked = 0;
            let mut s = 0;
            while checked < 10_000 {
                let t = random_rollout(env.as_ref(), s, s);
                for rec in t.features() {
                    classify(rec, &env.spec().stages).unwrap();
                    checked += 1;
                }
                s += 1;
            }
        }
    }

    #[test]
    fn ground_truth_separates_success_from_first_stage_failures() {
        for name in ENV_NAMES {
            let env = make_env(name).unwrap();
            let truth = make_ground_truth(name).unwrap();
            let rules = &env.spec().stages;
            let first = rules.iter().map(|r| r.index).min().unwrap();
            let mut trajs: Vec<Trajectory> = (0..100)
                .map(|s| random_rollout(env.as_ref(), s, s))
                .collect();
            // a few scripted successes so both groups are populated
            trajs.extend((0..5).map(|s| scripted_success(name, env.as_ref(), 1000 + s)));
            let stuck = |t: &Trajectory| {
                t.features()
                    .iter()
                    .all(|r| classify(r, rules).unwrap().index == first)
            };
            let worst_success = trajs
                .iter()
                .filter(|t| t.success())
                .map(|t| ground_truth_return(env.as_ref(), truth.as_ref(), t))
                .fold(f64::INFINITY, f64::min);
            let best_stuck = trajs
                .iter()
                .filter(|t| stuck(t) && !t.success())
                .map(|t| ground_truth_return(env.as_ref(), truth.as_ref(), t))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst_success.is_finite(), "{name}: no successes");
            assert!(worst_success > best_stuck, "{name}");
        }
    }

    /// Hand-written controllers that solve each task.
    pub(crate) fn scripted_success(name: &str, env: &dyn Environment, s: u64) -> Trajectory {
        let t = run_episode(env, s, TrajId(s), |obs| match name {
            "point-reach" => vec![obs[0] * 20.0, obs[1] * 20.0],
            "pick-carry" => {
                if obs[4] > 0.5 {
                    vec![obs[2] * 5.0, obs[3] * 5.0, 1.0]
                } else {
                    vec![obs[0] * 20.0, obs[1] * 20.0, 1.0]
                }
            }
            _ => {
                if obs[2] > 0.5 {
                    vec![-1.0, 1.0]
                } else {
                    vec![obs[0] * 20.0, 1.0]
                }
            }
        });
        assert!(t.success(), "{name} scripted controller failed on seed {s}");
        t
    }
}
