//! Boltzmann-rational Bradley-Terry preferences over trajectory returns.
//!
//! `P(a > b) = exp(beta * R(a)) / (exp(beta * R(a)) + exp(beta * R(b)))`, i.e.
//! the logistic function of `beta * (R(a) - R(b))`. The prior is uniform on the
//! active domain box, so the log-posterior is the summed log-likelihood inside
//! the box and `-inf` outside (the prior's normalizing constant is dropped).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{CompiledReward, ParamVector, RewardSpec, Trajectory, TrajectoryBases};
use crate::TrajId;

/// Default rationality coefficient.
pub const DEFAULT_BETA: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// The reward and the oracle order this pair differently.
    Discrepant,
    /// Both rankings agree on this pair.
    Agreed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    preferred: TrajId,
    dispreferred: TrajId,
    source: PairSource,
}

impl PreferencePair {
    pub fn new(preferred: TrajId, dispreferred: TrajId, source: PairSource) -> Result<Self> {
        if preferred == dispreferred {
            return Err(Error::InvalidPreference(format!(
                "trajectory {preferred} compared with itself"
            )));
        }
        Ok(Self {
            preferred,
            dispreferred,
            source,
        })
    }

    pub fn preferred(&self) -> TrajId {
        self.preferred
    }

    pub fn dispreferred(&self) -> TrajId {
        self.dispreferred
    }

    pub fn source(&self) -> PairSource {
        self.source
    }
}

/// Oriented pairs plus the trajectories they reference.
#[derive(Clone, Debug)]
pub struct PreferenceDataset {
    pairs: Vec<PreferencePair>,
    trajectories: Vec<Trajectory>,
    index: HashMap<TrajId, usize>,
    beta: f64,
}

impl PreferenceDataset {
    pub fn new(
        pairs: Vec<PreferencePair>,
        trajectories: Vec<Trajectory>,
        beta: f64,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidPreference(format!(
                "rationality beta must be finite and >= 0, got {beta}"
            )));
        }
        let mut index = HashMap::with_capacity(trajectories.len());
        for (i, t) in trajectories.iter().enumerate() {
            if index.insert(t.id(), i).is_some() {
                return Err(Error::InvalidPreference(format!(
                    "duplicate trajectory id {}",
                    t.id()
                )));
            }
        }
        for p in &pairs {
            for id in [p.preferred, p.dispreferred] {
                if !index.contains_key(&id) {
                    return Err(Error::UnknownTrajectory(id));
                }
            }
        }
        Ok(Self {
            pairs,
            trajectories,
            index,
            beta,
        })
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, id: TrajId) -> Option<&Trajectory> {
        self.index.get(&id).map(|&i| &self.trajectories[i])
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, source: PairSource) -> usize {
        self.pairs.iter().filter(|p| p.source == source).count()
    }

    /// Same trajectories and beta with a different pair list.
    pub fn with_pairs(&self, pairs: Vec<PreferencePair>) -> Result<Self> {
        Self::new(pairs, self.trajectories.clone(), self.beta)
    }
}

fn logistic_nonneg(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `P(i > j)` given the two returns. Computed so that
/// `pairwise_likelihood(a, b, beta) + pairwise_likelihood(b, a, beta) == 1.0` exactly.
pub fn pairwise_likelihood(return_i: f64, return_j: f64, beta: f64) -> Result<f64> {
    check_inputs(return_i, return_j, beta)?;
    let x = beta * (return_i - return_j);
    Ok(if x >= 0.0 {
        logistic_nonneg(x)
    } else {
        // p(-x) lies in [0.5, 1], so 1 - p(-x) is exact.
        1.0 - logistic_nonneg(-x)
    })
}

/// `ln P(i > j)`, stable for large `|beta * (r_i - r_j)|`.
pub fn log_pairwise_likelihood(return_i: f64, return_j: f64, beta: f64) -> Result<f64> {
    check_inputs(return_i, return_j, beta)?;
    Ok(log_logistic(beta * (return_i - return_j)))
}

fn check_inputs(return_i: f64, return_j: f64, beta: f64) -> Result<()> {
    if !return_i.is_finite() || !return_j.is_finite() {
        return Err(Error::NonFinite("trajectory return"));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidPreference(format!("invalid beta {beta}")));
    }
    Ok(())
}

/// `ln(1 / (1 + e^-x))`
pub(crate) fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Log-posterior of `params` given the preference data, with a uniform prior
/// on the active domain box.
pub fn log_posterior(
    params: &ParamVector,
    dataset: &PreferenceDataset,
    spec: &RewardSpec,
) -> Result<f64> {
    let model = PreferenceModel::new(dataset, spec)?;
    model.check_layout(params)?;
    if !params.in_active_domain() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(model.log_likelihood(params.values()))
}

/// Dataset compiled against a spec: per-step term bases for every trajectory
/// and pairs as index pairs. Evaluating a candidate touches no strings.
#[derive(Clone, Debug)]
pub struct PreferenceModel {
    reward: CompiledReward,
    bases: Vec<TrajectoryBases>,
    ids: Vec<TrajId>,
    pairs: Vec<(usize, usize)>,
    beta: f64,
}

impl PreferenceModel {
    pub fn new(dataset: &PreferenceDataset, spec: &RewardSpec) -> Result<Self> {
        let reward = CompiledReward::new(spec);
        let bases = dataset
            .trajectories
            .iter()
            .map(|t| {
                reward
                    .trajectory_bases(t)
                    .map_err(|e| e.at_trajectory(t.id()))
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = dataset
            .pairs
            .iter()
            .map(|p| (dataset.index[&p.preferred], dataset.index[&p.dispreferred]))
            .collect();
        Ok(Self {
            reward,
            bases,
            ids: dataset.trajectories.iter().map(Trajectory::id).collect(),
            pairs,
            beta: dataset.beta,
        })
    }

    pub fn check_layout(&self, params: &ParamVector) -> Result<()> {
        self.reward.check_layout(params)
    }

    pub fn ids(&self) -> &[TrajId] {
        &self.ids
    }

    /// Returns of every trajectory, in dataset order.
    pub fn returns(&self, weights: &[f64]) -> Vec<f64> {
        self.bases
            .iter()
            .map(|b| b.total(&self.reward, weights))
            .collect()
    }

    /// Summed log-likelihood over all pairs, with no domain check.
    pub fn log_likelihood(&self, weights: &[f64]) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let returns = self.returns(weights);
        self.pairs
            .iter()
            .map(|&(a, b)| log_logistic(self.beta * (returns[a] - returns[b])))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{builtin_spec, FeatureRecord};

    fn traj(id: u64, distances: &[f64]) -> Trajectory {
        let records = distances
            .iter()
            .map(|&d| FeatureRecord::new(0, [("distance_to_target", d)]).unwrap())
            .collect();
        Trajectory::from_features(TrajId(id), records, false).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        assert_eq!(pairwise_likelihood(1.3, 1.3, 0.9).unwrap(), 0.5);
        let p = pairwise_likelihood(1.0, 0.0, 1.0).unwrap();
        assert!((p - 0.7310586).abs() < 1e-6);
        assert!(pairwise_likelihood(f64::NAN, 0.0, 1.0).is_err());
        assert!(pairwise_likelihood(f64::INFINITY, 0.0, 1.0).is_err());
        assert!(pairwise_likelihood(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn extreme_gaps_do_not_overflow() {
        let hi = pairwise_likelihood(700.0, 0.0, 1.0).unwrap();
        let lo = pairwise_likelihood(0.0, 700.0, 1.0).unwrap();
        assert_eq!(hi + lo, 1.0);
        assert!(lo >= 0.0 && hi <= 1.0);
        let ll = log_pairwise_likelihood(0.0, 700.0, 1.0).unwrap();
        assert!((ll - -700.0).abs() < 1e-9);
        assert!(log_pairwise_likelihood(700.0, 0.0, 1.0).unwrap() <= 0.0);
    }

    #[test]
    fn dataset_rejects_unknown_ids_and_self_pairs() {
        assert!(PreferencePair::new(TrajId(1), TrajId(1), PairSource::Agreed).is_err());
        let pair = PreferencePair::new(TrajId(1), TrajId(9), PairSource::Agreed).unwrap();
        let r = PreferenceDataset::new(vec![pair], vec![traj(1, &[0.1])], 0.9);
        assert!(matches!(r, Err(Error::UnknownTrajectory(TrajId(9)))));
        assert!(PreferenceDataset::new(vec![], vec![], -0.1).is_err());
    }

    #[test]
    fn posterior_examples() {
        let spec = builtin_spec("point-reach").unwrap();
        let empty = PreferenceDataset::new(vec![], vec![traj(0, &[0.2])], 0.9).unwrap();
        assert_eq!(log_posterior(spec.params(), &empty, &spec).unwrap(), 0.0);

        let outside = spec.params().with_values(vec![-1.0]);
        assert_eq!(
            log_posterior(&outside, &empty, &spec).unwrap(),
            f64::NEG_INFINITY
        );

        let pair = PreferencePair::new(TrajId(0), TrajId(1), PairSource::Discrepant).unwrap();
        let ds = PreferenceDataset::new(
            vec![pair],
            vec![traj(0, &[0.2, 0.1]), traj(1, &[0.1, 0.2])],
            0.9,
        )
        .unwrap();
        let lp = log_posterior(spec.params(), &ds, &spec).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_is_flat() {
        let spec = builtin_spec("point-reach").unwrap();
        let pairs = vec![
            PreferencePair::new(TrajId(0), TrajId(1), PairSource::Discrepant).unwrap(),
            PreferencePair::new(TrajId(1), TrajId(2), PairSource::Agreed).unwrap(),
        ];
        let ds = PreferenceDataset::new(
            pairs,
            vec![traj(0, &[0.5]), traj(1, &[0.1]), traj(2, &[0.9])],
            0.0,
        )
        .unwrap();
        for w in [0.0, 0.3, 5.0, 10.0] {
            let p = spec.params().with_values(vec![w]);
            let lp = log_posterior(&p, &ds, &spec).unwrap();
            assert!((lp - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        }
    }
}
