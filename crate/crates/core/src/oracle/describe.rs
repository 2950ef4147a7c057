use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{FeatureRecord, FeatureValue, Trajectory};
use crate::TrajId;

/// Text rendering of one trajectory's last feature record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionDescription {
    pub index: usize,
    pub trajectory: TrajId,
    pub text: String,
}

pub fn format_value(v: FeatureValue) -> String {
    match v {
        FeatureValue::Real(x) => {
            let s = format!("{x:.4}");
            // -0.00001 would otherwise print as -0.0000
            if s.trim_start_matches('-')
                .chars()
                .all(|c| c == '0' || c == '.')
            {
                s.trim_start_matches('-').to_string()
            } else {
                s
            }
        }
        FeatureValue::Bool(true) => "True".into(),
        FeatureValue::Bool(false) => "False".into(),
        FeatureValue::Absent => "None".into(),
    }
}

pub fn describe_record(index: usize, record: &FeatureRecord) -> Result<String> {
    if record.is_empty() {
        return Err(Error::InvalidRecord(format!(
            "data sample {index} has an empty feature record"
        )));
    }
    let mut out = format!("data sample {index}: ");
    for (i, (name, value)) in record.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{name} = {}", format_value(value));
    }
    out.push('.');
    Ok(out)
}

/// One description per trajectory, in batch order, from its last step.
pub fn describe_execution(batch: &[Trajectory]) -> Result<Vec<ExecutionDescription>> {
    batch
        .iter()
        .enumerate()
        .map(|(index, t)| {
            Ok(ExecutionDescription {
                index,
                trajectory: t.id(),
                text: describe_record(index, t.last_features())?,
            })
        })
        .collect()
}

/// The bulleted block embedded in prompts.
pub fn render_descriptions(descriptions: &[ExecutionDescription]) -> String {
    descriptions
        .iter()
        .map(|d| format!("  - {}\n", d.text))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawer_line() {
        let rec = FeatureRecord::new(
            0,
            [
                ("drawer_joint_value", 0.0),
                ("distance_to_drawer", 0.0589),
                ("alignment", 0.9999),
            ],
        )
        .unwrap();
        assert_eq!(
            describe_record(0, &rec).unwrap(),
            "data sample 0: drawer_joint_value = 0.0000, distance_to_drawer = 0.0589, alignment = 0.9999."
        );
    }

    #[test]
    fn booleans_and_absent() {
        let rec = FeatureRecord::new(
            3,
            [
                ("grasped", FeatureValue::Bool(false)),
                ("peg_to_hole_distance", FeatureValue::Absent),
                ("x", FeatureValue::Real(-0.00001)),
                ("y", FeatureValue::Real(-0.25)),
            ],
        )
        .unwrap();
        let line = describe_record(3, &rec).unwrap();
        assert_eq!(
            line,
            "data sample 3: grasped = False, peg_to_hole_distance = None, x = 0.0000, y = -0.2500."
        );
    }

    #[test]
    fn empty_record_is_an_error() {
        let rec = FeatureRecord::new::<_, &str, f64>(0, []).unwrap();
        assert!(describe_record(0, &rec).is_err());
    }
}
