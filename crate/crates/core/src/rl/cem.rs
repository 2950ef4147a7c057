use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{BufferEntry, ReplayBuffer};
use super::policy::Policy;
use super::IdCounter;
use crate::envs::{run_episode, Environment};
use crate::error::{Error, Result};
use crate::reward::{CompiledReward, ParamVector, RewardSpec, Trajectory};
use crate::seed;
use crate::TrajId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CEMConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub generations: usize,
    pub episodes_per_candidate: usize,
    /// Initial sampling standard deviation for every policy parameter.
    pub init_std: f64,
    /// Floor on the refit standard deviation.
    pub min_std: f64,
    pub seed: u64,
}

impl Default for CEMConfig {
    fn default() -> Self {
        Self {
            population: 32,
            elite_fraction: 0.25,
            generations: 5,
            episodes_per_candidate: 4,
            init_std: 1.0,
            min_std: 0.05,
            seed: 0,
        }
    }
}

impl CEMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("cem.population must be at least 2".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::Config(format!(
                "cem.elite_fraction must lie in (0, 1), got {}",
                self.elite_fraction
            )));
        }
        if self.episodes_per_candidate == 0 {
            return Err(Error::Config(
                "cem.episodes_per_candidate must be positive".into(),
            ));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0)
            || !(self.min_std.is_finite() && self.min_std >= 0.0)
        {
            return Err(Error::Config(
                "cem standard deviations must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn n_elite(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }
}

/// Result of one inner-loop call.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub policy: Policy,
    /// Mean score of the elite set after each generation.
    pub elite_means: Vec<f64>,
}

/// Mean return of a candidate and its rollouts with their returns.
type Evaluated = (f64, Vec<(Trajectory, f64)>);

struct Scored {
    flat: Vec<f64>,
    score: f64,
}

/// Cross-entropy method on the flat policy parameters.
///
/// All candidates of a call are scored on the same reset seeds and noise
/// streams, and the previous elites stay in the selection pool, so the elite
/// mean score never decreases across generations. Scores are mean returns
/// under `(spec, params)`; the environment's hidden reward is not reachable
/// from here. Every rollout is appended to `buffer`.
pub fn train_policy(
    env: &dyn Environment,
    spec: &RewardSpec,
    params: &ParamVector,
    init: &Policy,
    config: &CEMConfig,
    buffer: &mut ReplayBuffer,
    ids: &mut IdCounter,
) -> Result<TrainReport> {
    config.validate()?;
    let reward = CompiledReward::new(spec);
    reward.check_layout(params)?;
    params.check_domain()?;
    if config.generations == 0 {
        return Ok(TrainReport {
            policy: init.clone(),
            elite_means: Vec::new(),
        });
    }
    let collected = Arc::new(params.clone());
    let (obs_dim, action_dim, noise) = (init.obs_dim(), init.action_dim(), init.noise_std());
    let episode_seeds: Vec<u64> = (0..config.episodes_per_candidate as u64)
        .map(|j| seed::derive(config.seed, "cem-episode", j))
        .collect();

    let evaluate = |flat: &[f64]| -> Result<(f64, Vec<(Trajectory, f64)>)> {
        let policy = Policy::from_flat(obs_dim, action_dim, flat, noise)?;
        let mut total = 0.0;
        let mut out = Vec::with_capacity(episode_seeds.len());
        for (j, &s) in episode_seeds.iter().enumerate() {
            let mut rng = seed::derived_rng(config.seed, "cem-noise", j as u64);
            let traj = run_episode(env, s, TrajId(0), |obs| policy.sample_action(obs, &mut rng));
            let ret = reward.trajectory_return(&traj, params.values())?;
            total += ret;
            out.push((traj, ret));
        }
        Ok((total / episode_seeds.len() as f64, out))
    };

    let mut mean = init.flat();
    let mut std = vec![config.init_std; mean.len()];
    let n_elite = config.n_elite();
    let mut elites: Vec<Scored> = Vec::new();
    let mut elite_means = Vec::with_capacity(config.generations);

    for gen in 0..config.generations {
        let mut rng = seed::derived_rng(config.seed, "cem-population", gen as u64);
        let mut candidates = vec![mean.clone()];
        while candidates.len() < config.population {
            candidates.push(
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect(),
            );
        }
        let results: Vec<Result<Evaluated>> = candidates.par_iter().map(|c| evaluate(c)).collect();
        let mut pool: Vec<Scored> = std::mem::take(&mut elites);
        for (flat, res) in candidates.into_iter().zip(results) {
            let (score, rollouts) = res?;
            for (traj, ret) in rollouts {
                buffer.push(BufferEntry {
                    trajectory: traj.with_id(ids.next_id()),
                    collection_return: ret,
                    collection_params: Arc::clone(&collected),
                });
            }
            pool.push(Scored { flat, score });
        }
        // stable sort: earlier (older elites, then lower candidate index) wins ties
        pool.sort_by(|a, b| b.score.total_cmp(&a.score));
        pool.truncate(n_elite);
        elites = pool;
        elite_means.push(elites.iter().map(|e| e.score).sum::<f64>() / elites.len() as f64);

        let k = elites.len() as f64;
        for d in 0..mean.len() {
            let m = elites.iter().map(|e| e.flat[d]).sum::<f64>() / k;
            let var = elites.iter().map(|e| (e.flat[d] - m).powi(2)).sum::<f64>() / k;
            mean[d] = m;
            std[d] = var.sqrt().max(config.min_std);
        }
    }

    Ok(TrainReport {
        policy: Policy::from_flat(obs_dim, action_dim, &mean, noise)?,
        elite_means,
    })
}
