use super::spec::RewardSpec;
use crate::error::{Error, Result};

const OPEN_DRAWER: &str = include_str!("../../assets/specs/open-drawer.toml");
const PUSH_CHAIR: &str = include_str!("../../assets/specs/push-chair.toml");
const PICK_CARRY: &str = include_str!("../../assets/specs/pick-carry.toml");
const POINT_REACH: &str = include_str!("../../assets/specs/point-reach.toml");

/// Names of the shipped reward specs.
pub const BUILTIN_SPECS: [&str; 4] = ["open-drawer", "push-chair", "pick-carry", "point-reach"];

/// TOML source of a shipped spec.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "open-drawer" => Some(OPEN_DRAWER),
        "push-chair" => Some(PUSH_CHAIR),
        "pick-carry" => Some(PICK_CARRY),
        "point-reach" => Some(POINT_REACH),
        _ => None,
    }
}

pub fn builtin_spec(name: &str) -> Result<RewardSpec> {
    let src = builtin_source(name)
        .ok_or_else(|| Error::Config(format!("unknown built-in reward spec `{name}`")))?;
    RewardSpec::from_toml_str(src)
}
