//! 2D gripper that must grasp an object and carry it to a goal.
//!
//! State: `[px, py, ox, oy, gx, gy, grasped, collision, t]`. Action
//! `[vx, vy, grip]` in `[-1, 1]^3`; velocities move the gripper by
//! `0.05 * v` inside the `[-1, 1]^2` workspace (hitting a wall is a
//! collision). A positive grip within 0.05 of the object grasps it; a
//! non-positive grip releases it. A held object trails the gripper by
//! `LAG` times the gripper's displacement, so carrying fast costs
//! gripper-to-object distance.
//!
//! Spawn: gripper at the origin, object at radius [0.3, 0.6], goal at
//! [0.3, 0.6] from the object and inside `[-0.9, 0.9]^2`.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{step_counter, EnvSpec, Environment, FeatureKind, GroundTruth, Step, STEP_SCALE};
use crate::oracle::{Condition, Direction, StageRule, StageScore};
use crate::reward::{feature_schema, FeatureRecord, FeatureValue};
use crate::seed;

pub const GRASP_RADIUS: f64 = 0.05;
pub const GOAL_RADIUS: f64 = 0.05;
pub const LAG: f64 = 2.0;
const WALL: f64 = 1.0;
const GOAL_BOX: f64 = 0.9;

#[derive(Clone, Debug)]
pub struct PickCarry {
    spec: EnvSpec,
}

impl Default for PickCarry {
    fn default() -> Self {
        let approach = Condition::All(vec![
            Condition::IsFalse("grasped".into()),
            Condition::Above("distance_to_target".into(), GRASP_RADIUS),
        ]);
        let grasp = Condition::All(vec![
            Condition::IsFalse("grasped".into()),
            Condition::AtMost("distance_to_target".into(), GRASP_RADIUS),
        ]);
        let transport = Condition::All(vec![
            Condition::IsTrue("grasped".into()),
            Condition::Above("distance_to_goal".into(), GOAL_RADIUS),
        ]);
        let placed = Condition::All(vec![
            Condition::IsTrue("grasped".into()),
            Condition::AtMost("distance_to_goal".into(), GOAL_RADIUS),
        ]);
        let rule = |index, name: &str, predicate, feature: &str| StageRule {
            index,
            name: name.into(),
            predicate,
            score: StageScore {
                feature: feature.into(),
                direction: Direction::LowerBetter,
                unit: 0.001,
            },
        };
        let spec = EnvSpec {
            name: "pick-carry",
            task_description: "pick up the object and transport it to the target position",
            state_dim: 9,
            obs_dim: 5,
            action_dim: 3,
            action_low: vec![-1.0; 3],
            action_high: vec![1.0; 3],
            horizon: 50,
            features: feature_schema([
                "distance_to_target",
                "grasped",
                "distance_to_goal",
                "collision",
            ])
            .expect("static schema"),
            feature_kinds: vec![
                FeatureKind::Real,
                FeatureKind::Bool,
                FeatureKind::Real,
                FeatureKind::Bool,
            ],
            success_description: "object grasped and final distance_to_goal < 0.05",
            stages: vec![
                rule(0, "approaching", approach, "distance_to_target"),
                rule(1, "grasping", grasp, "distance_to_target"),
                rule(2, "transporting", transport, "distance_to_goal"),
                rule(3, "placed", placed, "distance_to_goal"),
            ],
            default_reward: "pick-carry",
        };
        Self { spec }
    }
}

fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - bx).hypot(ay - by)
}

impl PickCarry {
    fn record(&self, s: &[f64]) -> FeatureRecord {
        FeatureRecord::with_schema(
            step_counter(s).saturating_sub(1),
            &self.spec.features,
            vec![
                FeatureValue::Real(dist(s[0], s[1], s[2], s[3])),
                FeatureValue::Bool(s[6] > 0.5),
                FeatureValue::Real(dist(s[2], s[3], s[4], s[5])),
                FeatureValue::Bool(s[7] > 0.5),
            ],
        )
    }
}

impl Environment for PickCarry {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, s: u64) -> Vec<f64> {
        let mut rng = seed::derived_rng(s, "pick-carry-reset", 0);
        let r_obj = rng.random_range(0.3..=0.6);
        let a_obj = rng.random_range(-PI..PI);
        let (ox, oy) = (r_obj * a_obj.cos(), r_obj * a_obj.sin());
        let r_goal = rng.random_range(0.3..=0.6);
        let mut goal = None;
        for _ in 0..64 {
            let a: f64 = rng.random_range(-PI..PI);
            let (gx, gy) = (ox + r_goal * a.cos(), oy + r_goal * a.sin());
            if gx.abs() <= GOAL_BOX && gy.abs() <= GOAL_BOX {
                goal = Some((gx, gy));
                break;
            }
        }
        // pointing back through the origin always fits
        let (gx, gy) = goal.unwrap_or_else(|| {
            let a = a_obj + PI;
            (ox + r_goal * a.cos(), oy + r_goal * a.sin())
        });
        vec![0.0, 0.0, ox, oy, gx, gy, 0.0, 0.0, 0.0]
    }

    fn step(&self, s: &[f64], action: &[f64]) -> Step {
        let a = self.spec.clip_action(action);
        let t = step_counter(s) + 1;
        let (px, py) = (s[0], s[1]);
        let mut nx = px + STEP_SCALE * a[0];
        let mut ny = py + STEP_SCALE * a[1];
        let collision = nx.abs() > WALL || ny.abs() > WALL;
        nx = nx.clamp(-WALL, WALL);
        ny = ny.clamp(-WALL, WALL);
        let (dx, dy) = (nx - px, ny - py);
        let grip = a[2] > 0.0;
        let (mut ox, mut oy) = (s[2], s[3]);
        let mut grasped = s[6] > 0.5;
        if grasped {
            if grip {
                ox = (nx - LAG * dx).clamp(-WALL, WALL);
                oy = (ny - LAG * dy).clamp(-WALL, WALL);
            } else {
                grasped = false;
            }
        } else if grip && dist(nx, ny, ox, oy) <= GRASP_RADIUS {
            grasped = true;
        }
        let next = vec![
            nx,
            ny,
            ox,
            oy,
            s[4],
            s[5],
            if grasped { 1.0 } else { 0.0 },
            if collision { 1.0 } else { 0.0 },
            t as f64,
        ];
        Step {
            features: self.record(&next),
            done: t >= self.spec.horizon,
            state: next,
        }
    }

    // offset to the current subgoal only: the object until it is held,
    // then the goal
    fn observe(&self, s: &[f64]) -> Vec<f64> {
        let g = s[6];
        vec![
            (1.0 - g) * (s[2] - s[0]),
            (1.0 - g) * (s[3] - s[1]),
            g * (s[4] - s[2]),
            g * (s[5] - s[3]),
            g,
        ]
    }

    fn is_success(&self, s: &[f64]) -> bool {
        s[6] > 0.5 && dist(s[2], s[3], s[4], s[5]) < GOAL_RADIUS
    }
}

impl GroundTruth for PickCarry {
    fn ground_truth_reward(&self, s: &[f64]) -> f64 {
        let d_obj = dist(s[0], s[1], s[2], s[3]);
        let d_goal = dist(s[2], s[3], s[4], s[5]);
        if s[6] > 0.5 {
            if d_goal <= GOAL_RADIUS {
                4.0
            } else {
                2.0 + (1.0 - d_goal.min(1.0))
            }
        } else if d_obj <= GRASP_RADIUS {
            1.5
        } else {
            1.0 - d_obj.min(1.0)
        }
    }

    fn success_bonus(&self) -> f64 {
        10.0 * self.spec.horizon as f64
    }
}
