//! Stage rules and the scripted ranking oracle.
//!
//! Each trajectory's last feature record is assigned to exactly one stage.
//! Stages are concatenated later-stage first, samples within a stage are
//! sorted by the stage score, and an optional noise pass swaps adjacent
//! same-stage samples with probability `1 - logistic(beta * |gap| / unit)`.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{Provenance, Ranking};
use crate::reward::{FeatureRecord, FeatureValue, Trajectory};
use crate::seed;

/// Boolean test over a feature record. An absent value fails every atomic test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    IsTrue(String),
    IsFalse(String),
    Above(String, f64),
    AtMost(String, f64),
    All(Vec<Condition>),
    Any(Vec<Condition>),
}

impl Condition {
    pub fn eval(&self, record: &FeatureRecord) -> Result<bool> {
        let get = |name: &str| -> Result<FeatureValue> {
            record
                .get(name)
                .ok_or_else(|| Error::Stage(format!("feature `{name}` is missing")))
        };
        Ok(match self {
            Condition::IsTrue(f) => get(f)?.as_bool() == Some(true),
            Condition::IsFalse(f) => get(f)?.as_bool() == Some(false),
            Condition::Above(f, t) => get(f)?.as_real().is_some_and(|v| v > *t),
            Condition::AtMost(f, t) => get(f)?.as_real().is_some_and(|v| v <= *t),
            Condition::All(cs) => {
                for c in cs {
                    if !c.eval(record)? {
                        return Ok(false);
                    }
                }
                true
            }
            Condition::Any(cs) => {
                for c in cs {
                    if c.eval(record)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, cs: &[Condition], sep: &str| {
            write!(f, "(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        };
        match self {
            Condition::IsTrue(n) => write!(f, "{n}"),
            Condition::IsFalse(n) => write!(f, "not {n}"),
            Condition::Above(n, t) => write!(f, "{n} > {t}"),
            Condition::AtMost(n, t) => write!(f, "{n} <= {t}"),
            Condition::All(cs) => join(f, cs, "and"),
            Condition::Any(cs) => join(f, cs, "or"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Within-stage ordering key. `unit` sets the gap that the noise model treats
/// as one unit of evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageScore {
    pub feature: String,
    pub direction: Direction,
    pub unit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRule {
    /// Larger means closer to task completion.
    pub index: usize,
    pub name: String,
    pub predicate: Condition,
    pub score: StageScore,
}

impl StageRule {
    /// Score where larger is always better; absent values rank last.
    fn goodness(&self, record: &FeatureRecord) -> Result<f64> {
        let v = record
            .get(&self.score.feature)
            .ok_or_else(|| {
                Error::Stage(format!(
                    "stage `{}` scores by missing feature `{}`",
                    self.name, self.score.feature
                ))
            })?
            .as_real();
        Ok(match (v, self.score.direction) {
            (None, _) => f64::NEG_INFINITY,
            (Some(v), Direction::HigherBetter) => v,
            (Some(v), Direction::LowerBetter) => -v,
        })
    }
}

pub fn validate_stages(rules: &[StageRule]) -> Result<()> {
    if rules.is_empty() {
        return Err(Error::Stage("no stage rules".into()));
    }
    for (i, r) in rules.iter().enumerate() {
        if rules[..i].iter().any(|o| o.index == r.index) {
            return Err(Error::Stage(format!("duplicate stage index {}", r.index)));
        }
        if !(r.score.unit > 0.0 && r.score.unit.is_finite()) {
            return Err(Error::Stage(format!(
                "stage `{}` has a non-positive score unit",
                r.name
            )));
        }
    }
    Ok(())
}

/// The unique stage matching `record`.
pub fn classify<'a>(record: &FeatureRecord, rules: &'a [StageRule]) -> Result<&'a StageRule> {
    let mut hit = None;
    let mut count = 0;
    for r in rules {
        if r.predicate.eval(record)? {
            hit = Some(r);
            count += 1;
        }
    }
    if count == 1 {
        return Ok(hit.expect("one match"));
    }
    let listing: Vec<String> = rules
        .iter()
        .map(|r| format!("{} [{}]", r.name, r.predicate))
        .collect();
    let shown: Vec<String> = record.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
    Err(Error::Stage(format!(
        "record {{{}}} matches {count} stages; predicates: {}",
        shown.join(", "),
        listing.join("; ")
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapModel {
    None,
    #[default]
    BoltzmannAdjacent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedConfig {
    pub beta: f64,
    pub swap: SwapModel,
    pub seed: u64,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self {
            beta: crate::preference::DEFAULT_BETA,
            swap: SwapModel::BoltzmannAdjacent,
            seed: 0,
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stage-clustered ranking with optional adjacent-swap noise.
pub fn scripted_rank(
    batch: &[Trajectory],
    rules: &[StageRule],
    config: &ScriptedConfig,
) -> Result<Ranking> {
    validate_stages(rules)?;
    if config.beta.is_nan() || config.beta < 0.0 {
        return Err(Error::Config(format!(
            "oracle beta must be >= 0, got {}",
            config.beta
        )));
    }
    let mut entries = Vec::with_capacity(batch.len());
    for (pos, t) in batch.iter().enumerate() {
        let rec = t.last_features();
        let rule = classify(rec, rules).map_err(|e| e.at_trajectory(t.id()))?;
        entries.push((rule, rule.goodness(rec)?, pos, t.id()));
    }
    entries.sort_by(|a, b| {
        b.0.index
            .cmp(&a.0.index)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    if config.swap == SwapModel::BoltzmannAdjacent {
        let mut rng = seed::derived_rng(config.seed, "scripted-oracle", 0);
        for i in 0..entries.len().saturating_sub(1) {
            let (a, b) = (&entries[i], &entries[i + 1]);
            if a.0.index != b.0.index {
                continue;
            }
            let gap = (a.1 - b.1).abs() / a.0.score.unit;
            let keep = if gap.is_finite() {
                logistic(config.beta * gap)
            } else {
                1.0
            };
            if rng.random::<f64>() < 1.0 - keep {
                entries.swap(i, i + 1);
            }
        }
    }
    Ranking::new(
        entries.into_iter().map(|e| e.3).collect(),
        Provenance::Oracle,
    )
}

/// Furthest stage index reached by any trajectory's last record.
pub fn furthest_stage(batch: &[Trajectory], rules: &[StageRule]) -> Result<usize> {
    let mut best = None;
    for t in batch {
        let r = classify(t.last_features(), rules)?;
        best = Some(best.map_or(r.index, |b: usize| b.max(r.index)));
    }
    best.ok_or_else(|| Error::Stage("empty batch".into()))
}
