use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Linear-Gaussian state-feedback policy: `a = W obs + b + noise`.
///
/// `W` is stored row-major (`action_dim x obs_dim`). Exploration noise is a
/// fixed isotropic standard deviation; greedy execution drops it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    obs_dim: usize,
    action_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    noise_std: f64,
}

impl Policy {
    pub fn zeros(obs_dim: usize, action_dim: usize, noise_std: f64) -> Self {
        Self {
            obs_dim,
            action_dim,
            weights: vec![0.0; obs_dim * action_dim],
            bias: vec![0.0; action_dim],
            noise_std,
        }
    }

    pub fn for_env(env: &dyn Environment, noise_std: f64) -> Self {
        let spec = env.spec();
        Self::zeros(spec.obs_dim, spec.action_dim, noise_std)
    }

    /// Rebuild from a flat vector laid out as `[W row-major, b]`.
    pub fn from_flat(
        obs_dim: usize,
        action_dim: usize,
        flat: &[f64],
        noise_std: f64,
    ) -> Result<Self> {
        let n = obs_dim * action_dim;
        if flat.len() != n + action_dim {
            return Err(Error::Config(format!(
                "policy vector has {} entries, expected {}",
                flat.len(),
                n + action_dim
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) || !noise_std.is_finite() || noise_std < 0.0 {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(Self {
            obs_dim,
            action_dim,
            weights: flat[..n].to_vec(),
            bias: flat[n..].to_vec(),
            noise_std,
        })
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Greedy (mean) action.
    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(obs.len(), self.obs_dim);
        self.weights
            .chunks_exact(self.obs_dim.max(1))
            .take(self.action_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(obs).map(|(w, o)| w * o).sum::<f64>())
            .collect()
    }

    pub fn sample_action(&self, obs: &[f64], rng: &mut Rng) -> Vec<f64> {
        let mut a = self.mean_action(obs);
        if self.noise_std > 0.0 {
            for x in &mut a {
                let z: f64 = StandardNormal.sample(rng);
                *x += self.noise_std * z;
            }
        }
        a
    }
}
