//! 2D point mass driven by velocity commands toward a target.
//!
//! State: `[px, py, tx, ty, t]`. The point starts at the origin; the target
//! lies at radius `0.5 + 0.2 * spread * (2u - 1)` and angle
//! `spread * pi * (2v - 1)` for uniform `u, v`, so `spread = 0` always puts it
//! at `(0.5, 0)`. Observation: target minus position.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{step_counter, EnvSpec, Environment, FeatureKind, GroundTruth, Step, STEP_SCALE};
use crate::oracle::{Condition, Direction, StageRule, StageScore};
use crate::reward::{feature_schema, FeatureRecord, FeatureValue};
use crate::seed;

pub const SUCCESS_RADIUS: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct PointReach {
    spread: f64,
    spec: EnvSpec,
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl PointReach {
    pub fn new(spread: f64) -> Self {
        let spec = EnvSpec {
            name: "point-reach",
            task_description: "move the point to the target position",
            state_dim: 5,
            obs_dim: 2,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            horizon: 30,
            features: feature_schema(["distance_to_target"]).expect("static schema"),
            feature_kinds: vec![FeatureKind::Real],
            success_description: "final distance_to_target < 0.05",
            stages: vec![StageRule {
                index: 0,
                name: "reaching".into(),
                predicate: Condition::AtMost("distance_to_target".into(), f64::INFINITY),
                score: StageScore {
                    feature: "distance_to_target".into(),
                    direction: Direction::LowerBetter,
                    unit: 0.001,
                },
            }],
            default_reward: "point-reach",
        };
        Self { spread, spec }
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    fn distance(state: &[f64]) -> f64 {
        (state[2] - state[0]).hypot(state[3] - state[1])
    }

    fn record(&self, state: &[f64]) -> FeatureRecord {
        FeatureRecord::with_schema(
            step_counter(state).saturating_sub(1),
            &self.spec.features,
            vec![FeatureValue::Real(Self::distance(state))],
        )
    }
}

impl Environment for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, s: u64) -> Vec<f64> {
        let mut rng = seed::derived_rng(s, "point-reach-reset", 0);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let radius = 0.5 + 0.2 * self.spread * (2.0 * u - 1.0);
        let angle = self.spread * PI * (2.0 * v - 1.0);
        vec![0.0, 0.0, radius * angle.cos(), radius * angle.sin(), 0.0]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Step {
        let a = self.spec.clip_action(action);
        let t = step_counter(state) + 1;
        let next = vec![
            state[0] + STEP_SCALE * a[0],
            state[1] + STEP_SCALE * a[1],
            state[2],
            state[3],
            t as f64,
        ];
        Step {
            features: self.record(&next),
            done: t >= self.spec.horizon,
            state: next,
        }
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![state[2] - state[0], state[3] - state[1]]
    }

    fn is_success(&self, state: &[f64]) -> bool {
        Self::distance(state) < SUCCESS_RADIUS
    }
}

impl GroundTruth for PointReach {
    fn ground_truth_reward(&self, state: &[f64]) -> f64 {
        (1.0 - Self::distance(state)).max(0.0)
    }

    fn success_bonus(&self) -> f64 {
        10.0 * self.spec.horizon as f64
    }
}
