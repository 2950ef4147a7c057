use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::stage::{furthest_stage, StageRule};
use crate::error::{Error, Result};
use crate::reward::{ParamVector, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    Increase,
    Decrease,
    NoChange,
}

impl fmt::Display for Adjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adjustment::Increase => "+",
            Adjustment::Decrease => "-",
            Adjustment::NoChange => "=",
        })
    }
}

/// Suggested change direction per parameter; suggested values are dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionResult {
    pub directions: BTreeMap<String, Adjustment>,
}

impl ReflectionResult {
    /// Entries that actually ask for a change.
    pub fn changes(&self) -> impl Iterator<Item = (&str, Adjustment)> {
        self.directions
            .iter()
            .filter(|(_, d)| **d != Adjustment::NoChange)
            .map(|(k, d)| (k.as_str(), *d))
    }

    pub fn is_empty(&self) -> bool {
        self.changes().next().is_none()
    }

    /// Compact `name+;other-` form used in metrics.
    pub fn summary(&self) -> String {
        self.changes()
            .map(|(k, d)| format!("{k}{d}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn keyword(comment: &str) -> Option<Adjustment> {
    let c = comment.to_ascii_lowercase();
    let no_change = ["no change", "no-change", "unchanged", "keep"]
        .iter()
        .filter_map(|k| c.find(k))
        .min();
    let inc = c.find("increase");
    let dec = c.find("decrease");
    [
        (no_change, Adjustment::NoChange),
        (inc, Adjustment::Increase),
        (dec, Adjustment::Decrease),
    ]
    .into_iter()
    .filter_map(|(pos, a)| pos.map(|p| (p, a)))
    .min_by_key(|(p, _)| *p)
    .map(|(_, a)| a)
}

/// Parse the final dictionary literal of a reflection reply.
///
/// Each `'name': value` entry takes its direction from the `#` comment that
/// follows it on the same line. Without a direction keyword, the suggested
/// value is compared with the current one only to read off the direction.
pub fn parse_reflection(reply: &str, params: &ParamVector) -> Result<ReflectionResult> {
    let parse_err = |reason: &str| Error::Parse {
        reason: reason.to_string(),
        reply: reply.to_string(),
    };
    let start = reply
        .rmatch_indices('{')
        .map(|(i, _)| i)
        .find(|&i| entry_re(&reply[i + 1..]).next().is_some())
        .ok_or_else(|| parse_err("no dictionary literal found"))?;
    let block = &reply[start + 1..];

    let mut result = ReflectionResult::default();
    let mut unknown = Vec::new();
    for line in block.lines() {
        let (code, comment) = match line.find('#') {
            Some(h) => (&line[..h], &line[h + 1..]),
            None => (line, ""),
        };
        let entries: Vec<(String, &str)> = entry_re(code).collect();
        for (i, (name, value)) in entries.iter().enumerate() {
            let Some(idx) = params.index_of(name) else {
                unknown.push(name.clone());
                continue;
            };
            // one comment per line; it belongs to the last entry on that line
            let kw = if i + 1 == entries.len() {
                keyword(comment)
            } else {
                None
            };
            let dir = match kw {
                Some(d) => d,
                None => {
                    let v: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(&format!("entry `{name}` has no direction")))?;
                    let cur = params.values()[idx];
                    if v > cur {
                        Adjustment::Increase
                    } else if v < cur {
                        Adjustment::Decrease
                    } else {
                        Adjustment::NoChange
                    }
                }
            };
            result.directions.insert(name.clone(), dir);
        }
        if code.contains('}') {
            break;
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Parse {
            reason: format!("unknown parameter(s): {}", unknown.join(", ")),
            reply: reply.to_string(),
        });
    }
    Ok(result)
}

/// `'key': value` pairs in a line fragment.
fn entry_re(s: &str) -> impl Iterator<Item = (String, &str)> {
    let mut rest = s;
    std::iter::from_fn(move || loop {
        let q = rest.find(['\'', '"'])?;
        let quote = rest[q..].chars().next()?;
        let after = &rest[q + 1..];
        let end = after.find(quote)?;
        let key = &after[..end];
        let tail = after[end + 1..].trim_start();
        if let Some(v) = tail.strip_prefix(':') {
            let stop = v.find([',', '}', '\n']).unwrap_or(v.len());
            let value = &v[..stop];
            rest = &v[stop..];
            return Some((key.to_string(), value));
        }
        rest = &after[end + 1..];
    })
}

/// Per-environment stand-in for reflection: the furthest stage reached in the
/// batch selects which weights to push, namely those of the stages after it.
pub fn scripted_reflection(
    env_name: &str,
    batch: &[Trajectory],
    rules: &[StageRule],
    params: &ParamVector,
) -> Result<ReflectionResult> {
    if batch.is_empty() {
        return Err(Error::Stage("reflection needs a nonempty batch".into()));
    }
    let stage = furthest_stage(batch, rules)?;
    let table: &[&str] = match (env_name, stage) {
        ("point-reach", _) => &["approach_weight"],
        ("pick-carry", 0 | 1) => &["grasp_weight", "transport_weight"],
        ("pick-carry", _) => &["transport_weight", "movement_weight"],
        ("drawer-pull-1d", 0) => &["grasp_weight", "pull_weight"],
        ("drawer-pull-1d", _) => &["pull_weight"],
        _ => &[],
    };
    let mut result = ReflectionResult::default();
    for name in table {
        if params.index_of(name).is_some() {
            result
                .directions
                .insert((*name).to_string(), Adjustment::Increase);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::ParamDomain;

    fn params(names: &[&str]) -> ParamVector {
        ParamVector::new(names.iter().map(|n| {
            (
                n.to_string(),
                50.0,
                ParamDomain::new(-100.0, 100.0).unwrap(),
            )
        }))
        .unwrap()
    }

    #[test]
    fn commented_dictionary() {
        let reply = "Count of relevant terms:\n- approach_reward: 5 times\n\nResult:\n\
            {'distance_to_peg_weight': 60.0, # increase to encourage reaching\n \
            'grasp_reward_value': 70.0, # decrease as it already grasps\n \
            'collision_penalty_value': -20.0} # # no change as no collision is detected\n";
        let p = params(&[
            "distance_to_peg_weight",
            "grasp_reward_value",
            "collision_penalty_value",
        ]);
        let r = parse_reflection(reply, &p).unwrap();
        assert_eq!(r.directions["distance_to_peg_weight"], Adjustment::Increase);
        assert_eq!(r.directions["grasp_reward_value"], Adjustment::Decrease);
        assert_eq!(
            r.directions["collision_penalty_value"],
            Adjustment::NoChange
        );
    }

    #[test]
    fn example_dictionary_with_comments() {
        let reply = "Result:\n{'param_a': 1.0, # increase\n 'param_b': 1.0} # increase";
        let r = parse_reflection(reply, &params(&["param_a", "param_b"])).unwrap();
        assert!(r.directions.values().all(|d| *d == Adjustment::Increase));
        assert_eq!(r.summary(), "param_a+;param_b+");
    }

    #[test]
    fn uncommented_values_compare_with_current() {
        let reply = "Result:\n{'param_a': 80.0, 'param_b': 10.0}";
        let r = parse_reflection(reply, &params(&["param_a", "param_b"])).unwrap();
        assert_eq!(r.directions["param_a"], Adjustment::Increase);
        assert_eq!(r.directions["param_b"], Adjustment::Decrease);
    }

    #[test]
    fn errors() {
        let p = params(&["param_a"]);
        assert!(parse_reflection("no dictionary here", &p).is_err());
        let err = parse_reflection("{'mystery': 1.0} # increase", &p).unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn scripted_lookup_needs_batch() {
        let env = crate::envs::make_env("pick-carry").unwrap();
        let p = crate::reward::builtin_spec("pick-carry")
            .unwrap()
            .params()
            .clone();
        assert!(scripted_reflection("pick-carry", &[], &env.spec().stages, &p).is_err());
    }
}
