//! Declarative parametric rewards.
//!
//! A [`RewardSpec`] is a weighted sum of named terms, each one of a small
//! closed set of expression forms over named features. Parameters carry a
//! full domain and an active (possibly restricted) sub-domain. Trajectories
//! store features rather than rewards, so any stored step can be relabeled
//! under new parameters without re-simulation.

mod builtin;
mod eval;
mod features;
mod params;
mod spec;

pub use builtin::{builtin_source, builtin_spec, BUILTIN_SPECS};
pub use eval::{
    evaluate_return, evaluate_reward, relabel, Binding, CompiledReward, TrajectoryBases,
};
pub use features::{feature_schema, FeatureRecord, FeatureSchema, FeatureValue, Trajectory};
pub use params::{denormalize, normalize, ParamDomain, ParamVector};
pub use spec::{Expression, Form, Gate, Guard, RewardSpec, RewardTerm};

pub(crate) use params::raw_distance;
pub(crate) use spec::SpecFile;
