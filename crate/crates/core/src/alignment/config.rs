use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::inference::{MHConfig, DEFAULT_RADII};
use crate::oracle::OracleConfig;
use crate::preference::DEFAULT_BETA;
use crate::reward::{builtin_source, builtin_spec, ParamVector, RewardSpec};
use crate::rl::{CEMConfig, DEFAULT_BINS};

/// Outer-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub max_iterations: usize,
    /// Success rate below which a consistent batch triggers active adjustment.
    pub adjust_threshold: f64,
    /// Success rate at which the run stops.
    pub target_success: f64,
    /// Greedy rollouts of the current policy per iteration.
    pub rollouts: usize,
    /// Replay samples drawn from the return histogram per iteration.
    pub histogram_samples: usize,
    pub histogram_bins: usize,
    pub beta: f64,
    pub radii: Vec<f64>,
    /// Episodes in the fixed evaluation block that measures success rate.
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
    /// Exploration noise of the linear-Gaussian policy.
    pub policy_noise: f64,
    /// Turn off to freeze parameters under ranking disagreement.
    pub bayesian_update: bool,
    /// Turn off to skip reflection when rankings agree but the policy stalls.
    pub active_adjustment: bool,
    pub mh: MHConfig,
    pub cem: CEMConfig,
    pub oracle: OracleConfig,
    pub seed: u64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            adjust_threshold: 0.5,
            target_success: 0.9,
            rollouts: 5,
            histogram_samples: 5,
            histogram_bins: DEFAULT_BINS,
            beta: DEFAULT_BETA,
            radii: DEFAULT_RADII.to_vec(),
            eval_episodes: 100,
            buffer_capacity: 2000,
            policy_noise: 0.1,
            bayesian_update: true,
            active_adjustment: true,
            mh: MHConfig::default(),
            cem: CEMConfig::default(),
            oracle: OracleConfig::default(),
            seed: 0,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("adjust_threshold", self.adjust_threshold)?;
        unit("target_success", self.target_success)?;
        if self.rollouts + self.histogram_samples < 2 {
            return Err(Error::Config(
                "rollouts + histogram_samples must be at least 2 to form pairs".into(),
            ));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!(
                "radii must be nonempty and positive, got {:?}",
                self.radii
            )));
        }
        if !(self.policy_noise >= 0.0 && self.policy_noise.is_finite()) {
            return Err(Error::Config("policy_noise must be finite and >= 0".into()));
        }
        self.mh.validate()?;
        self.cem.validate()?;
        self.oracle.validate()
    }
}

/// One experiment description, possibly over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    /// Built-in spec name or path to a spec file; defaults to the
    /// environment's own spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<String>,
    /// Condition label carried into comparisons.
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub initial_params: BTreeMap<String, f64>,
    #[serde(default)]
    pub alignment: AlignmentConfig,
}

fn default_label() -> String {
    "self-alignment".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn new(env: &str) -> Self {
        Self {
            env: env.into(),
            reward: None,
            label: default_label(),
            out: default_out(),
            seeds: default_seeds(),
            initial_params: BTreeMap::new(),
            alignment: AlignmentConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Directory for one seed.
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }

    /// Same experiment restricted to one seed, as snapshotted in its run directory.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.alignment.seed = seed;
        c
    }

    pub fn environment(&self) -> Result<std::sync::Arc<dyn Environment>> {
        make_env(&self.env)
    }

    pub fn reward_spec(&self, env: &dyn Environment) -> Result<RewardSpec> {
        let name = self.reward.as_deref().unwrap_or(env.spec().default_reward);
        if builtin_source(name).is_some() {
            return builtin_spec(name);
        }
        let path = Path::new(name);
        if !path.exists() {
            return Err(Error::Config(format!(
                "reward: `{name}` is neither a built-in spec nor an existing file"
            )));
        }
        RewardSpec::load(path)
    }

    pub fn initial_params(&self, spec: &RewardSpec) -> Result<ParamVector> {
        spec.params_with(self.initial_params.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(|e| Error::Config(format!("initial_params: {e}")))
    }

    /// Check everything that can be checked before iteration 0.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.alignment.validate()?;
        let env = self.environment()?;
        let spec = self.reward_spec(env.as_ref())?;
        let missing = spec.unknown_features(&env.spec().features);
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "reward spec uses features missing from `{}`: {}",
                self.env,
                missing.join(", ")
            )));
        }
        self.initial_params(&spec)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::new("pick-carry");
        c.initial_params.insert("transport_weight".into(), 0.02);
        c.seeds = vec![1, 2, 3];
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        let snap = c.for_seed(2);
        assert_eq!(
            RunConfig::from_toml_str(&snap.to_toml_string().unwrap()).unwrap(),
            snap
        );
    }

    #[test]
    fn validation_names_the_problem() {
        let err = RunConfig::new("warp-drive").validate().unwrap_err();
        assert!(err.to_string().contains("warp-drive"));
        let mut c = RunConfig::new("pick-carry");
        c.initial_params.insert("nonexistent_weight".into(), 1.0);
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("nonexistent_weight"));
        let mut c = RunConfig::new("pick-carry");
        c.alignment.rollouts = 1;
        c.alignment.histogram_samples = 0;
        assert!(c.validate().is_err());
        let err = RunConfig::from_toml_str("env = \"pick-carry\"\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
