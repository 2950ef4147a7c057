//! One-dimensional drawer: reach the handle along a line, then pull.
//!
//! State: `[x, q, contacted, collision, h0, t]`. The gripper starts at
//! `x = 0`; the handle sits at `h0 - q` with `h0` in [0.3, 0.6] and joint
//! value `q` in [0, 0.4]. Action `[v, grip]`: a positive grip within 0.02 of
//! the handle makes contact, and while in contact the handle follows the
//! gripper (within the joint limits). Moving past the handle without contact
//! is a collision and stops the gripper at the handle.

use rand::Rng as _;

use super::{step_counter, EnvSpec, Environment, FeatureKind, GroundTruth, Step, STEP_SCALE};
use crate::oracle::{Condition, Direction, StageRule, StageScore};
use crate::reward::{feature_schema, FeatureRecord, FeatureValue};
use crate::seed;

pub const CONTACT_RADIUS: f64 = 0.02;
pub const JOINT_MAX: f64 = 0.4;
pub const SUCCESS_JOINT: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct DrawerPull {
    spec: EnvSpec,
}

impl Default for DrawerPull {
    fn default() -> Self {
        let reaching = Condition::All(vec![
            Condition::IsFalse("contacted".into()),
            Condition::AtMost("drawer_joint_value".into(), 0.0),
        ]);
        let pulling = Condition::Any(vec![
            Condition::IsTrue("contacted".into()),
            Condition::Above("drawer_joint_value".into(), 0.0),
        ]);
        let spec = EnvSpec {
            name: "drawer-pull-1d",
            task_description: "open cabinet drawer as much as possible",
            state_dim: 6,
            obs_dim: 3,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            horizon: 40,
            features: feature_schema([
                "distance_to_handle",
                "contacted",
                "drawer_joint_value",
                "distance_to_goal",
                "collision",
            ])
            .expect("static schema"),
            feature_kinds: vec![
                FeatureKind::Real,
                FeatureKind::Bool,
                FeatureKind::Real,
                FeatureKind::Real,
                FeatureKind::Bool,
            ],
            success_description: "final drawer_joint_value >= 0.3",
            stages: vec![
                StageRule {
                    index: 0,
                    name: "reaching".into(),
                    predicate: reaching,
                    score: StageScore {
                        feature: "distance_to_handle".into(),
                        direction: Direction::LowerBetter,
                        unit: 0.001,
                    },
                },
                StageRule {
                    index: 1,
                    name: "pulling".into(),
                    predicate: pulling,
                    score: StageScore {
                        feature: "drawer_joint_value".into(),
                        direction: Direction::HigherBetter,
                        unit: 0.001,
                    },
                },
            ],
            default_reward: "open-drawer",
        };
        Self { spec }
    }
}

impl DrawerPull {
    fn record(&self, s: &[f64]) -> FeatureRecord {
        let handle = s[4] - s[1];
        FeatureRecord::with_schema(
            step_counter(s).saturating_sub(1),
            &self.spec.features,
            vec![
                FeatureValue::Real((handle - s[0]).abs()),
                FeatureValue::Bool(s[2] > 0.5),
                FeatureValue::Real(s[1]),
                FeatureValue::Real(JOINT_MAX - s[1]),
                FeatureValue::Bool(s[3] > 0.5),
            ],
        )
    }
}

impl Environment for DrawerPull {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, s: u64) -> Vec<f64> {
        let mut rng = seed::derived_rng(s, "drawer-reset", 0);
        let h0 = rng.random_range(0.3..=0.6);
        vec![0.0, 0.0, 0.0, 0.0, h0, 0.0]
    }

    fn step(&self, s: &[f64], action: &[f64]) -> Step {
        let a = self.spec.clip_action(action);
        let t = step_counter(s) + 1;
        let h0 = s[4];
        let grip = a[1] > 0.0;
        let mut x = (s[0] + STEP_SCALE * a[0]).max(-1.0);
        let mut q = s[1];
        let mut contacted = s[2] > 0.5 && grip;
        let mut collision = false;
        if contacted {
            q = (h0 - x).clamp(0.0, JOINT_MAX);
            x = h0 - q;
        } else {
            let handle = h0 - q;
            if x > handle {
                x = handle;
                collision = true;
            }
            if grip && (handle - x).abs() <= CONTACT_RADIUS {
                contacted = true;
            }
        }
        let next = vec![
            x,
            q,
            if contacted { 1.0 } else { 0.0 },
            if collision { 1.0 } else { 0.0 },
            h0,
            t as f64,
        ];
        Step {
            features: self.record(&next),
            done: t >= self.spec.horizon,
            state: next,
        }
    }

    fn observe(&self, s: &[f64]) -> Vec<f64> {
        vec![s[4] - s[1] - s[0], s[1], s[2]]
    }

    fn is_success(&self, s: &[f64]) -> bool {
        s[1] >= SUCCESS_JOINT
    }
}

impl GroundTruth for DrawerPull {
    fn ground_truth_reward(&self, s: &[f64]) -> f64 {
        if s[2] > 0.5 || s[1] > 0.0 {
            2.0 + s[1] / JOINT_MAX
        } else {
            1.0 - (s[4] - s[1] - s[0]).abs().min(1.0)
        }
    }

    fn success_bonus(&self) -> f64 {
        10.0 * self.spec.horizon as f64
    }
}
