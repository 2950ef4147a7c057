//! Reward evaluation.
//!
//! A [`CompiledReward`] resolves feature names to slots once; every public
//! evaluation path (single record, trajectory return, relabeling, the
//! precomputed per-step bases used by the sampler) goes through the same
//! `term_bases` + `combine` pair, so they agree bit for bit.

use std::sync::Arc;

use super::features::{FeatureRecord, FeatureSchema, FeatureValue, Trajectory};
use super::params::ParamVector;
use super::spec::{Expression, RewardSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Slot {
    Feature(usize),
    Neg(usize),
    Thresholded(usize, f64),
    Gated {
        gate: usize,
        when: bool,
        guard: Option<(usize, f64)>,
        value: f64,
    },
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    weight: usize,
    slot: Slot,
}

#[derive(Clone, Debug)]
pub struct CompiledReward {
    terms: Vec<CompiledTerm>,
    term_names: Vec<String>,
    features: Vec<String>,
    param_names: Arc<[String]>,
}

/// Slot-to-column mapping for one feature schema.
#[derive(Clone, Debug)]
pub struct Binding {
    schema: FeatureSchema,
    columns: Vec<Option<usize>>,
}

impl Binding {
    pub fn matches(&self, schema: &FeatureSchema) -> bool {
        Arc::ptr_eq(&self.schema, schema) || self.schema[..] == schema[..]
    }
}

impl CompiledReward {
    pub fn new(spec: &RewardSpec) -> Self {
        let mut features: Vec<String> = Vec::new();
        let mut slot_of = |name: &str| -> usize {
            match features.iter().position(|f| f == name) {
                Some(i) => i,
                None => {
                    features.push(name.to_string());
                    features.len() - 1
                }
            }
        };
        let params = spec.params();
        let terms = spec
            .terms()
            .iter()
            .map(|t| {
                let weight = params
                    .index_of(&t.weight_param)
                    .expect("validated at spec construction");
                let slot = match &t.expression {
                    Expression::Feature(f) => Slot::Feature(slot_of(f)),
                    Expression::NegFeature(f) => Slot::Neg(slot_of(f)),
                    Expression::ThresholdedNegFeature { feature, threshold } => {
                        Slot::Thresholded(slot_of(feature), *threshold)
                    }
                    Expression::GatedConstant { gate, constant }
                    | Expression::GatedNegConstant { gate, constant } => {
                        let value = if matches!(t.expression, Expression::GatedNegConstant { .. }) {
                            -constant
                        } else {
                            *constant
                        };
                        Slot::Gated {
                            gate: slot_of(&gate.feature),
                            when: gate.when,
                            guard: gate
                                .guard
                                .as_ref()
                                .map(|g| (slot_of(&g.feature), g.threshold)),
                            value,
                        }
                    }
                };
                CompiledTerm { weight, slot }
            })
            .collect();
        Self {
            terms,
            term_names: spec.terms().iter().map(|t| t.name.clone()).collect(),
            features,
            param_names: params.names().to_vec().into(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn bind(&self, schema: &FeatureSchema) -> Binding {
        Binding {
            schema: Arc::clone(schema),
            columns: self
                .features
                .iter()
                .map(|f| schema.iter().position(|s| s == f))
                .collect(),
        }
    }

    /// Check that `params` has the spec's parameter layout.
    pub fn check_layout(&self, params: &ParamVector) -> Result<()> {
        if params.names() != &self.param_names[..] {
            return Err(Error::ParamMismatch(format!(
                "expected [{}], got [{}]",
                self.param_names.join(", "),
                params.names().join(", ")
            )));
        }
        Ok(())
    }

    fn value(
        &self,
        binding: &Binding,
        record: &FeatureRecord,
        term: usize,
        slot: usize,
    ) -> Result<FeatureValue> {
        match binding.columns[slot] {
            Some(c) => Ok(record.values()[c]),
            None => Err(Error::MissingFeature {
                term: self.term_names[term].clone(),
                feature: self.features[slot].clone(),
            }),
        }
    }

    fn real(
        &self,
        binding: &Binding,
        record: &FeatureRecord,
        term: usize,
        slot: usize,
    ) -> Result<f64> {
        self.value(binding, record, term, slot)?
            .as_real()
            .ok_or_else(|| Error::AbsentFeature {
                term: self.term_names[term].clone(),
                feature: self.features[slot].clone(),
            })
    }

    /// Unweighted term values for one record, written into `out`.
    pub fn term_bases(
        &self,
        binding: &Binding,
        record: &FeatureRecord,
        out: &mut [f64],
    ) -> Result<()> {
        debug_assert!(binding.matches(record.schema()));
        for (k, t) in self.terms.iter().enumerate() {
            out[k] = match t.slot {
                Slot::Feature(s) => self.real(binding, record, k, s)?,
                Slot::Neg(s) => -self.real(binding, record, k, s)?,
                Slot::Thresholded(s, th) => {
                    let f = self.real(binding, record, k, s)?;
                    if f > th {
                        -f
                    } else {
                        0.0
                    }
                }
                Slot::Gated {
                    gate,
                    when,
                    guard,
                    value,
                } => {
                    // An absent gate or guard value leaves the term inactive.
                    let open = self.value(binding, record, k, gate)?.as_bool() == Some(when);
                    let guarded = match guard {
                        None => true,
                        Some((g, th)) => self
                            .value(binding, record, k, g)?
                            .as_real()
                            .is_some_and(|v| v > th),
                    };
                    if open && guarded {
                        value
                    } else {
                        0.0
                    }
                }
            };
        }
        Ok(())
    }

    /// Weighted sum of bases, accumulated in term order.
    pub fn combine(&self, weights: &[f64], bases: &[f64]) -> f64 {
        let mut total = 0.0;
        for (t, b) in self.terms.iter().zip(bases) {
            total += weights[t.weight] * b;
        }
        total
    }

    pub fn reward(
        &self,
        binding: &Binding,
        record: &FeatureRecord,
        weights: &[f64],
    ) -> Result<f64> {
        let mut bases = vec![0.0; self.terms.len()];
        self.term_bases(binding, record, &mut bases)?;
        Ok(self.combine(weights, &bases))
    }

    /// Per-step bases for a whole trajectory.
    pub fn trajectory_bases(&self, traj: &Trajectory) -> Result<TrajectoryBases> {
        let k = self.terms.len();
        let mut bases = vec![0.0; k * traj.horizon()];
        let mut binding: Option<Binding> = None;
        for (t, record) in traj.features().iter().enumerate() {
            if !binding.as_ref().is_some_and(|b| b.matches(record.schema())) {
                binding = Some(self.bind(record.schema()));
            }
            let b = binding.as_ref().expect("bound above");
            self.term_bases(b, record, &mut bases[t * k..(t + 1) * k])
                .map_err(|e| e.at_step(t))?;
        }
        Ok(TrajectoryBases { n_terms: k, bases })
    }

    pub fn trajectory_return(&self, traj: &Trajectory, weights: &[f64]) -> Result<f64> {
        Ok(self.trajectory_bases(traj)?.total(self, weights))
    }
}

/// Precomputed unweighted term values for every step of a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryBases {
    n_terms: usize,
    bases: Vec<f64>,
}

impl TrajectoryBases {
    /// Return under `weights`: per-step rewards summed in step order.
    pub fn total(&self, reward: &CompiledReward, weights: &[f64]) -> f64 {
        let mut ret = 0.0;
        if self.n_terms == 0 {
            // empty spec: every step contributes 0.0
            return ret;
        }
        for step in self.bases.chunks_exact(self.n_terms) {
            ret += reward.combine(weights, step);
        }
        ret
    }
}

/// `R_theta(features)`: weighted sum of the spec's terms.
pub fn evaluate_reward(
    spec: &RewardSpec,
    params: &ParamVector,
    features: &FeatureRecord,
) -> Result<f64> {
    let compiled = CompiledReward::new(spec);
    compiled.check_layout(params)?;
    params.check_domain()?;
    let binding = compiled.bind(features.schema());
    compiled.reward(&binding, features, params.values())
}

/// Realized return: per-step rewards summed over the horizon.
pub fn evaluate_return(spec: &RewardSpec, params: &ParamVector, traj: &Trajectory) -> Result<f64> {
    let compiled = CompiledReward::new(spec);
    compiled.check_layout(params)?;
    params.check_domain()?;
    compiled.trajectory_return(traj, params.values())
}

/// Recompute a stored step's reward under new parameters.
pub fn relabel(features: &FeatureRecord, spec: &RewardSpec, params: &ParamVector) -> Result<f64> {
    evaluate_reward(spec, params, features)
}
