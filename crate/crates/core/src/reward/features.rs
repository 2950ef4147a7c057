use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::TrajId;

/// Ordered feature names shared by every record an environment emits.
pub type FeatureSchema = Arc<[String]>;

/// Build a schema, rejecting empty or duplicated names.
pub fn feature_schema<I, S>(names: I) -> Result<FeatureSchema>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let names: Vec<String> = names.into_iter().map(Into::into).collect();
    let mut seen = HashSet::new();
    for name in &names {
        if name.is_empty() {
            return Err(Error::InvalidRecord("empty feature name".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidRecord(format!("duplicate feature `{name}`")));
        }
    }
    Ok(names.into())
}

/// A single reward feature value. `Absent` is distinct from zero and renders as `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureValue {
    Real(f64),
    Bool(bool),
    Absent,
}

impl FeatureValue {
    /// Numeric view; booleans coerce to 1.0 / 0.0.
    pub fn as_real(self) -> Option<f64> {
        match self {
            FeatureValue::Real(v) => Some(v),
            FeatureValue::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
            FeatureValue::Absent => None,
        }
    }

    /// Truth view; reals are true when nonzero.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            FeatureValue::Real(v) => Some(v != 0.0),
            FeatureValue::Bool(b) => Some(b),
            FeatureValue::Absent => None,
        }
    }

    pub fn is_absent(self) -> bool {
        matches!(self, FeatureValue::Absent)
    }
}

impl From<f64> for FeatureValue {
    fn from(v: f64) -> Self {
        FeatureValue::Real(v)
    }
}

impl From<bool> for FeatureValue {
    fn from(b: bool) -> Self {
        FeatureValue::Bool(b)
    }
}

impl<T: Into<FeatureValue>> From<Option<T>> for FeatureValue {
    fn from(v: Option<T>) -> Self {
        v.map_or(FeatureValue::Absent, Into::into)
    }
}

impl Serialize for FeatureValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            FeatureValue::Real(v) => s.serialize_f64(v),
            FeatureValue::Bool(b) => s.serialize_bool(b),
            FeatureValue::Absent => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ValueVisitor;
        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = FeatureValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, a boolean or null")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Real(v as f64))
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Bool(v))
            }
            fn visit_none<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Absent)
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
                Ok(FeatureValue::Absent)
            }
        }
        d.deserialize_any(ValueVisitor)
    }
}

/// Named reward features observed at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    step: usize,
    names: FeatureSchema,
    values: Vec<FeatureValue>,
}

impl FeatureRecord {
    pub fn new<I, S, V>(step: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, V)>,
        S: Into<String>,
        V: Into<FeatureValue>,
    {
        let (names, values): (Vec<String>, Vec<FeatureValue>) = entries
            .into_iter()
            .map(|(n, v)| (n.into(), v.into()))
            .unzip();
        Ok(Self {
            step,
            names: feature_schema(names)?,
            values,
        })
    }

    /// Record over a pre-validated schema. Panics if the value count differs.
    pub fn with_schema(step: usize, schema: &FeatureSchema, values: Vec<FeatureValue>) -> Self {
        assert_eq!(schema.len(), values.len(), "feature value count");
        Self {
            step,
            names: Arc::clone(schema),
            values,
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.names
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[FeatureValue] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<FeatureValue> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, FeatureValue)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Serialize for FeatureRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.values.len()))?;
        for (name, value) in self.iter() {
            map.serialize_entry(name, &value)?;
        }
        map.end()
    }
}

/// Deserializes the ordered `{name: value}` map; the step index is supplied
/// by the enclosing log line, so it defaults to zero here.
impl<'de> Deserialize<'de> for FeatureRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct RecordVisitor;
        impl<'de> Visitor<'de> for RecordVisitor {
            type Value = FeatureRecord;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of feature names to values")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut entries: Vec<(String, FeatureValue)> = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, FeatureValue>()? {
                    entries.push((k, v));
                }
                FeatureRecord::new(0, entries).map_err(de::Error::custom)
            }
        }
        d.deserialize_map(RecordVisitor)
    }
}

/// One rollout: `states[t]` is the state reached after `actions[t]`, and
/// `features[t]` is computed from that state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: TrajId,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    features: Vec<FeatureRecord>,
    success: bool,
}

impl Trajectory {
    pub fn new(
        id: TrajId,
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        features: Vec<FeatureRecord>,
        success: bool,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "trajectory {id} has horizon 0"
            )));
        }
        if states.len() != features.len() || actions.len() != features.len() {
            return Err(Error::InvalidRecord(format!(
                "trajectory {id}: {} states, {} actions, {} feature records",
                states.len(),
                actions.len(),
                features.len()
            )));
        }
        Ok(Self {
            id,
            states,
            actions,
            features,
            success,
        })
    }

    /// Trajectory made only of feature records; states and actions are empty vectors.
    pub fn from_features(id: TrajId, features: Vec<FeatureRecord>, success: bool) -> Result<Self> {
        let n = features.len();
        Self::new(
            id,
            vec![Vec::new(); n],
            vec![Vec::new(); n],
            features,
            success,
        )
    }

    pub fn id(&self) -> TrajId {
        self.id
    }

    pub(crate) fn with_id(mut self, id: TrajId) -> Self {
        self.id = id;
        self
    }

    pub fn horizon(&self) -> usize {
        self.features.len()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn features(&self) -> &[FeatureRecord] {
        &self.features
    }

    pub fn last_features(&self) -> &FeatureRecord {
        self.features.last().expect("horizon >= 1")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("horizon >= 1")
    }

    pub fn success(&self) -> bool {
        self.success
    }
}
