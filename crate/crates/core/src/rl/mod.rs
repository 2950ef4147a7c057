//! Inner loop: linear-Gaussian policies trained by the cross-entropy method,
//! greedy rollouts, and a feature-storing replay buffer.
//!
//! Nothing here takes a [`GroundTruth`](crate::envs::GroundTruth); policies
//! only ever see rewards computed from a reward spec.

mod buffer;
mod cem;
mod policy;

use rayon::prelude::*;

use crate::envs::{run_episode, Environment};
use crate::reward::Trajectory;
use crate::seed;
use crate::TrajId;

pub use buffer::{histogram_sample, BufferEntry, ReplayBuffer, DEFAULT_BINS};
pub use cem::{train_policy, CEMConfig, TrainReport};
pub use policy::Policy;

/// Source of run-unique, strictly increasing trajectory ids.
#[derive(Clone, Debug, Default)]
pub struct IdCounter {
    next: u64,
}

impl IdCounter {
    pub fn new(start: u64) -> Self {
        Self { next: start }
    }

    pub fn next_id(&mut self) -> TrajId {
        let id = TrajId(self.next);
        self.next += 1;
        id
    }

    pub fn peek(&self) -> TrajId {
        TrajId(self.next)
    }
}

/// `m` greedy episodes with reset seeds derived from `seed`.
pub fn rollout(
    env: &dyn Environment,
    policy: &Policy,
    m: usize,
    seed: u64,
    ids: &mut IdCounter,
) -> Vec<Trajectory> {
    (0..m)
        .map(|i| {
            let s = seed::derive(seed, "rollout", i as u64);
            run_episode(env, s, ids.next_id(), |obs| policy.mean_action(obs))
        })
        .collect()
}

/// Fraction of `episodes` greedy runs that succeed, on a fixed seed block.
pub fn success_rate(env: &dyn Environment, policy: &Policy, episodes: usize, seed: u64) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let wins = (0..episodes)
        .into_par_iter()
        .filter(|&i| {
            let s = seed::derive(seed, "evaluation", i as u64);
            run_episode(env, s, TrajId(0), |obs| policy.mean_action(obs)).success()
        })
        .count();
    wins as f64 / episodes as f64
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::envs::{make_env, EnvSpec, GroundTruth, Step};
    use crate::reward::{builtin_spec, evaluate_return, FeatureRecord, ParamVector};

    fn uniform_entries(returns: &[f64]) -> (ReplayBuffer, crate::reward::RewardSpec, ParamVector) {
        // point-reach: return = -w * sum(distance); one-step trajectories
        let spec = builtin_spec("point-reach").unwrap();
        let params = spec.params().clone();
        let w = params.values()[0];
        let mut buf = ReplayBuffer::new(1000);
        for (i, r) in returns.iter().enumerate() {
            let rec = FeatureRecord::new(0, [("distance_to_target", -r / w)]).unwrap();
            let t = Trajectory::from_features(TrajId(i as u64), vec![rec], false).unwrap();
            buf.push(BufferEntry {
                collection_return: evaluate_return(&spec, &params, &t).unwrap(),
                trajectory: t,
                collection_params: Arc::new(params.clone()),
            });
        }
        (buf, spec, params)
    }

    fn bin_of(id: TrajId, returns: &[f64], bins: usize) -> usize {
        let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r = returns[id.0 as usize];
        (((r - lo) / ((hi - lo) / bins as f64)) as usize).min(bins - 1)
    }

    #[test]
    fn histogram_one_per_bin_when_spread() {
        let returns: Vec<f64> = (0..50).map(|i| -(i as f64) * 0.1).collect();
        let (buf, spec, params) = uniform_entries(&returns);
        for s in 0..20 {
            let got = histogram_sample(&buf, &spec, &params, 5, 5, s).unwrap();
            let mut bins: Vec<usize> = got.iter().map(|t| bin_of(t.id(), &returns, 5)).collect();
            bins.sort();
            assert_eq!(bins, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn histogram_cycles_sparse_bins() {
        let mut returns = vec![-10.0; 10];
        returns[1] = -9.9;
        returns.extend([0.0, -0.1]);
        let (buf, spec, params) = uniform_entries(&returns);
        let got = histogram_sample(&buf, &spec, &params, 5, 5, 3).unwrap();
        let low = got
            .iter()
            .filter(|t| bin_of(t.id(), &returns, 5) == 0)
            .count();
        let high = got
            .iter()
            .filter(|t| bin_of(t.id(), &returns, 5) == 4)
            .count();
        assert_eq!((low, high), (3, 2));
        let mut ids: Vec<_> = got.iter().map(|t| t.id()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn histogram_edge_cases() {
        let (buf, spec, params) = uniform_entries(&[]);
        assert!(histogram_sample(&buf, &spec, &params, 5, 5, 0)
            .unwrap()
            .is_empty());
        let (buf, spec, params) = uniform_entries(&[-1.0, -2.0, -3.0]);
        assert_eq!(
            histogram_sample(&buf, &spec, &params, 5, 5, 0)
                .unwrap()
                .len(),
            3
        );
        let (buf, spec, params) = uniform_entries(&[-1.0; 8]);
        let got = histogram_sample(&buf, &spec, &params, 5, 5, 0).unwrap();
        assert_eq!(got.len(), 5);
    }

    #[test]
    fn buffer_is_fifo_and_bounded() {
        let params = builtin_spec("point-reach").unwrap().params().clone();
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5u64 {
            let rec = FeatureRecord::new(0, [("distance_to_target", 0.1)]).unwrap();
            buf.push(BufferEntry {
                trajectory: Trajectory::from_features(TrajId(i), vec![rec], false).unwrap(),
                collection_return: 0.0,
                collection_params: Arc::new(params.clone()),
            });
            assert!(buf.len() <= 3);
        }
        let ids: Vec<u64> = buf.iter().map(|e| e.trajectory.id().0).collect();
        assert_eq!(ids, vec![2, 3, 4]);
    }

    fn small_cem(seed: u64, generations: usize) -> CEMConfig {
        CEMConfig {
            population: 16,
            generations,
            episodes_per_candidate: 2,
            seed,
            ..CEMConfig::default()
        }
    }

    #[test]
    fn zero_generations_returns_init() {
        let env = make_env("point-reach").unwrap();
        let spec = builtin_spec("point-reach").unwrap();
        let init = Policy::from_flat(2, 2, &[1.0, 0.0, 0.0, 1.0, 0.1, 0.2], 0.1).unwrap();
        let mut buf = ReplayBuffer::new(100);
        let out = train_policy(
            env.as_ref(),
            &spec,
            spec.params(),
            &init,
            &small_cem(0, 0),
            &mut buf,
            &mut IdCounter::default(),
        )
        .unwrap();
        assert_eq!(out.policy, init);
        assert!(buf.is_empty());
    }

    #[test]
    fn cem_is_deterministic_and_relabels_round_trip() {
        let env = make_env("point-reach").unwrap();
        let spec = builtin_spec("point-reach").unwrap();
        let init = Policy::for_env(env.as_ref(), 0.1);
        let run = || {
            let mut buf = ReplayBuffer::new(1000);
            let mut ids = IdCounter::default();
            let out = train_policy(
                env.as_ref(),
                &spec,
                spec.params(),
                &init,
                &small_cem(4, 3),
                &mut buf,
                &mut ids,
            )
            .unwrap();
            (out.policy, buf)
        };
        let (a, buf) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(buf.len(), 16 * 2 * 3);
        for e in buf.iter() {
            let r = evaluate_return(&spec, &e.collection_params, &e.trajectory).unwrap();
            assert_eq!(r, e.collection_return);
        }
    }

    #[test]
    fn elite_mean_never_decreases() {
        let env = make_env("point-reach").unwrap();
        let spec = builtin_spec("point-reach").unwrap();
        let init = Policy::for_env(env.as_ref(), 0.1);
        for s in 0..5 {
            let out = train_policy(
                env.as_ref(),
                &spec,
                spec.params(),
                &init,
                &small_cem(s, 6),
                &mut ReplayBuffer::new(0),
                &mut IdCounter::default(),
            )
            .unwrap();
            for w in out.elite_means.windows(2) {
                assert!(w[1] >= w[0], "seed {s}: {:?}", out.elite_means);
            }
        }
    }

    #[test]
    fn rollout_ids_and_determinism() {
        let env = make_env("pick-carry").unwrap();
        let policy = Policy::for_env(env.as_ref(), 0.1);
        let mut ids = IdCounter::default();
        let a = rollout(env.as_ref(), &policy, 5, 9, &mut ids);
        let b = rollout(env.as_ref(), &policy, 5, 9, &mut ids);
        let all: Vec<u64> = a.iter().chain(&b).map(|t| t.id().0).collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a[0].states(), b[0].states());
    }

    /// Environment wrapper whose hidden reward panics if ever consulted.
    struct Tainted(Arc<dyn Environment>);

    impl Environment for Tainted {
        fn spec(&self) -> &EnvSpec {
            self.0.spec()
        }
        fn reset(&self, seed: u64) -> Vec<f64> {
            self.0.reset(seed)
        }
        fn step(&self, state: &[f64], action: &[f64]) -> Step {
            self.0.step(state, action)
        }
        fn observe(&self, state: &[f64]) -> Vec<f64> {
            self.0.observe(state)
        }
        fn is_success(&self, state: &[f64]) -> bool {
            self.0.is_success(state)
        }
    }

    impl GroundTruth for Tainted {
        fn ground_truth_reward(&self, _: &[f64]) -> f64 {
            panic!("ground-truth reward reached the learner")
        }
        fn success_bonus(&self) -> f64 {
            panic!("ground-truth reward reached the learner")
        }
    }

    #[test]
    fn learner_never_touches_ground_truth() {
        let env = Tainted(make_env("pick-carry").unwrap());
        let spec = builtin_spec("pick-carry").unwrap();
        let init = Policy::for_env(&env, 0.1);
        let mut buf = ReplayBuffer::new(500);
        let mut ids = IdCounter::default();
        let out = train_policy(
            &env,
            &spec,
            spec.params(),
            &init,
            &small_cem(1, 2),
            &mut buf,
            &mut ids,
        )
        .unwrap();
        rollout(&env, &out.policy, 5, 0, &mut ids);
        histogram_sample(&buf, &spec, spec.params(), 5, 5, 0).unwrap();
        success_rate(&env, &out.policy, 10, 0);
    }
}
