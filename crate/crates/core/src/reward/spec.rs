use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamDomain, ParamVector};
use crate::error::{Error, Result};

/// Boolean gate `feature == when`, optionally conjoined with `guard.feature > guard.threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub feature: String,
    pub when: bool,
    pub guard: Option<Guard>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Guard {
    pub feature: String,
    pub threshold: f64,
}

/// The closed set of base expressions a term may use. A term's value is its
/// weight parameter times the base expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    /// `f`
    Feature(String),
    /// `-f`
    NegFeature(String),
    /// `-f if f > threshold else 0`
    ThresholdedNegFeature { feature: String, threshold: f64 },
    /// `constant if gate else 0`
    GatedConstant { gate: Gate, constant: f64 },
    /// `-constant if gate else 0`
    GatedNegConstant { gate: Gate, constant: f64 },
}

impl Expression {
    pub fn features(&self) -> Vec<&str> {
        match self {
            Expression::Feature(f) | Expression::NegFeature(f) => vec![f],
            Expression::ThresholdedNegFeature { feature, .. } => vec![feature],
            Expression::GatedConstant { gate, .. } | Expression::GatedNegConstant { gate, .. } => {
                let mut v = vec![gate.feature.as_str()];
                if let Some(g) = &gate.guard {
                    v.push(&g.feature);
                }
                v
            }
        }
    }

    pub fn is_gated(&self) -> bool {
        matches!(
            self,
            Expression::GatedConstant { .. } | Expression::GatedNegConstant { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardTerm {
    pub name: String,
    pub weight_param: String,
    pub expression: Expression,
}

/// A parametric reward: a weighted sum of named terms over named features.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSpec {
    name: Option<String>,
    terms: Vec<RewardTerm>,
    params: ParamVector,
}

impl RewardSpec {
    pub fn new(name: Option<String>, terms: Vec<RewardTerm>, params: ParamVector) -> Result<Self> {
        let problems = check_terms(&terms, &params);
        if !problems.is_empty() {
            return Err(Error::InvalidSpec(problems.join("; ")));
        }
        Ok(Self {
            name,
            terms,
            params,
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn terms(&self) -> &[RewardTerm] {
        &self.terms
    }

    /// Default parameter values with their domains.
    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn feature_names(&self) -> BTreeSet<&str> {
        self.terms
            .iter()
            .flat_map(|t| t.expression.features())
            .collect()
    }

    /// Names of referenced features missing from `schema`.
    pub fn unknown_features(&self, schema: &[String]) -> Vec<String> {
        self.feature_names()
            .into_iter()
            .filter(|f| !schema.iter().any(|s| s == f))
            .map(str::to_string)
            .collect()
    }

    /// Defaults with a subset of values overridden.
    pub fn params_with<'a, I>(&self, overrides: I) -> Result<ParamVector>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut p = self.params.clone();
        for (name, v) in overrides {
            p.set(name, v)?;
        }
        Ok(p)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text)?;
        file.into_spec(None)
            .map_err(|e| Error::InvalidSpec(e.join("; ")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text)?;
        file.into_spec(None)
            .map_err(|e| Error::InvalidSpec(e.join("; ")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(&SpecFile::from(self))?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecFile::from(self))?)
    }

    /// Load a spec file; `.json` is parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// Render as a Python-style `get_reward` function for use in prompts.
    pub fn render_python(&self, params: &ParamVector) -> String {
        let mut out = String::from("def get_reward(obs");
        for (name, v) in params.names().iter().zip(params.values()) {
            let _ = write!(out, ", {name}={}", py_float(*v));
        }
        out.push_str("):\n");
        for f in self.feature_names() {
            let _ = writeln!(out, "    {f} = obs['{f}']");
        }
        for t in &self.terms {
            let w = &t.weight_param;
            let body = match &t.expression {
                Expression::Feature(f) => format!("{w} * {f}"),
                Expression::NegFeature(f) => format!("-{w} * {f}"),
                Expression::ThresholdedNegFeature { feature, threshold } => format!(
                    "-{w} * {feature} if {feature} > {} else 0.0",
                    py_float(*threshold)
                ),
                Expression::GatedConstant { gate, constant } => {
                    format!(
                        "{w} * {} if {} else 0.0",
                        py_float(*constant),
                        py_gate(gate)
                    )
                }
                Expression::GatedNegConstant { gate, constant } => {
                    format!(
                        "-{w} * {} if {} else 0.0",
                        py_float(*constant),
                        py_gate(gate)
                    )
                }
            };
            let _ = writeln!(out, "    {} = {body}", t.name);
        }
        let total = if self.terms.is_empty() {
            "0.0".to_string()
        } else {
            self.terms
                .iter()
                .map(|t| t.name.as_str())
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let _ = writeln!(out, "    total_reward = {total}");
        out.push_str("    return total_reward\n");
        out
    }
}

fn py_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn py_gate(gate: &Gate) -> String {
    let head = if gate.when {
        gate.feature.clone()
    } else {
        format!("not {}", gate.feature)
    };
    match &gate.guard {
        Some(g) => format!("{head} and {} > {}", g.feature, py_float(g.threshold)),
        None => head,
    }
}

pub(crate) fn term_name_ok(name: &str) -> bool {
    (name.ends_with("_reward") && name.len() > "_reward".len())
        || (name.ends_with("_penalty") && name.len() > "_penalty".len())
}

fn check_terms(terms: &[RewardTerm], params: &ParamVector) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for t in terms {
        if !term_name_ok(&t.name) {
            problems.push(format!(
                "term `{}` must end with \"_reward\" or \"_penalty\"",
                t.name
            ));
        }
        if !seen.insert(t.name.as_str()) {
            problems.push(format!("duplicate term `{}`", t.name));
        }
        if params.index_of(&t.weight_param).is_none() {
            problems.push(format!(
                "term `{}` uses undeclared parameter `{}`",
                t.name, t.weight_param
            ));
        }
        for f in t.expression.features() {
            if f.is_empty() {
                problems.push(format!("term `{}` names an empty feature", t.name));
            }
        }
        let constants: Vec<f64> = match &t.expression {
            Expression::ThresholdedNegFeature { threshold, .. } => vec![*threshold],
            Expression::GatedConstant { gate, constant }
            | Expression::GatedNegConstant { gate, constant } => {
                let mut c = vec![*constant];
                if let Some(g) = &gate.guard {
                    c.push(g.threshold);
                }
                c
            }
            _ => vec![],
        };
        if constants.iter().any(|c| !c.is_finite()) {
            problems.push(format!("term `{}` has a non-finite constant", t.name));
        }
    }
    problems
}

/// Expression form tag used by the file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Feature,
    NegFeature,
    ThresholdedNegFeature,
    GatedConstant,
    GatedNegConstant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct ParamDef {
    pub name: String,
    pub default: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct TermDef {
    pub name: String,
    pub weight_param: String,
    pub form: Form,
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_threshold: Option<f64>,
}

/// On-disk layout: `[[parameters]]` then `[[terms]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub parameters: Vec<ParamDef>,
    #[serde(default)]
    pub terms: Vec<TermDef>,
}

impl From<&RewardSpec> for SpecFile {
    fn from(spec: &RewardSpec) -> Self {
        let p = spec.params();
        let parameters = p
            .names()
            .iter()
            .zip(p.values())
            .zip(p.domains())
            .map(|((name, &v), d)| ParamDef {
                name: name.clone(),
                default: Some(v),
                min: Some(d.min()),
                max: Some(d.max()),
            })
            .collect();
        let terms = spec
            .terms()
            .iter()
            .map(|t| {
                let mut def = TermDef {
                    name: t.name.clone(),
                    weight_param: t.weight_param.clone(),
                    form: Form::Feature,
                    feature: String::new(),
                    threshold: None,
                    constant: None,
                    when: None,
                    guard_feature: None,
                    guard_threshold: None,
                };
                match &t.expression {
                    Expression::Feature(f) => def.feature = f.clone(),
                    Expression::NegFeature(f) => {
                        def.form = Form::NegFeature;
                        def.feature = f.clone();
                    }
                    Expression::ThresholdedNegFeature { feature, threshold } => {
                        def.form = Form::ThresholdedNegFeature;
                        def.feature = feature.clone();
                        def.threshold = Some(*threshold);
                    }
                    Expression::GatedConstant { gate, constant }
                    | Expression::GatedNegConstant { gate, constant } => {
                        def.form = if matches!(t.expression, Expression::GatedConstant { .. }) {
                            Form::GatedConstant
                        } else {
                            Form::GatedNegConstant
                        };
                        def.feature = gate.feature.clone();
                        def.constant = Some(*constant);
                        def.when = (!gate.when).then_some(false);
                        if let Some(g) = &gate.guard {
                            def.guard_feature = Some(g.feature.clone());
                            def.guard_threshold = Some(g.threshold);
                        }
                    }
                }
                def
            })
            .collect();
        SpecFile {
            name: spec.name.clone(),
            parameters,
            terms,
        }
    }
}

impl SpecFile {
    /// Validate into a spec, collecting every problem found. When a feature
    /// schema is supplied, referenced features must belong to it.
    pub(crate) fn into_spec(
        self,
        schema: Option<&[String]>,
    ) -> std::result::Result<RewardSpec, Vec<String>> {
        let mut problems = Vec::new();
        let mut entries = Vec::new();
        for p in &self.parameters {
            let (Some(min), Some(max)) = (p.min, p.max) else {
                problems.push(format!(
                    "parameter `{}` is missing its domain (min/max)",
                    p.name
                ));
                continue;
            };
            let domain = match ParamDomain::new(min, max) {
                Ok(d) => d,
                Err(e) => {
                    problems.push(format!("parameter `{}`: {e}", p.name));
                    continue;
                }
            };
            let Some(default) = p.default else {
                problems.push(format!("parameter `{}` is missing its default", p.name));
                continue;
            };
            if !domain.contains(default) {
                problems.push(format!(
                    "parameter `{}` default {default} lies outside [{min}, {max}]",
                    p.name
                ));
                continue;
            }
            entries.push((p.name.clone(), default, domain));
        }
        let params = match ParamVector::new(entries) {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };

        let mut terms = Vec::new();
        for t in self.terms {
            match term_from_def(t) {
                Ok(term) => terms.push(term),
                Err(e) => problems.push(e),
            }
        }
        if let Some(params) = &params {
            problems.extend(check_terms(&terms, params));
        }
        if let Some(schema) = schema {
            let mut unknown = BTreeSet::new();
            for t in &terms {
                for f in t.expression.features() {
                    if !schema.iter().any(|s| s == f) {
                        unknown.insert(format!("term `{}` uses unknown feature `{f}`", t.name));
                    }
                }
            }
            problems.extend(unknown);
        }
        match (params, problems.is_empty()) {
            (Some(params), true) => Ok(RewardSpec {
                name: self.name,
                terms,
                params,
            }),
            _ => Err(problems),
        }
    }
}

fn term_from_def(t: TermDef) -> std::result::Result<RewardTerm, String> {
    let gate = |t: &TermDef| -> std::result::Result<Gate, String> {
        let guard = match (&t.guard_feature, t.guard_threshold) {
            (Some(f), Some(th)) => Some(Guard {
                feature: f.clone(),
                threshold: th,
            }),
            (None, None) => None,
            _ => {
                return Err(format!(
                    "term `{}`: guard_feature and guard_threshold must be given together",
                    t.name
                ))
            }
        };
        Ok(Gate {
            feature: t.feature.clone(),
            when: t.when.unwrap_or(true),
            guard,
        })
    };
    let expression = match t.form {
        Form::Feature => Expression::Feature(t.feature.clone()),
        Form::NegFeature => Expression::NegFeature(t.feature.clone()),
        Form::ThresholdedNegFeature => Expression::ThresholdedNegFeature {
            feature: t.feature.clone(),
            threshold: t.threshold.ok_or_else(|| {
                format!(
                    "term `{}`: thresholded_neg_feature needs a threshold",
                    t.name
                )
            })?,
        },
        Form::GatedConstant => Expression::GatedConstant {
            gate: gate(&t)?,
            constant: t.constant.unwrap_or(1.0),
        },
        Form::GatedNegConstant => Expression::GatedNegConstant {
            gate: gate(&t)?,
            constant: t.constant.unwrap_or(1.0),
        },
    };
    Ok(RewardTerm {
        name: t.name,
        weight_param: t.weight_param,
        expression,
    })
}
