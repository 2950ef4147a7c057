//! One-parameter MAP recovery against an independent grid search, shared by
//! the inference tests and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reward_align::inference::{mh_chain, MHConfig};
use reward_align::preference::{PairSource, PreferenceDataset, PreferencePair};
use reward_align::reward::{FeatureRecord, RewardSpec, Trajectory};
use reward_align::TrajId;

/// `base_reward` has a weight pinned to 1 by a tiny domain, so `theta` is the
/// only free parameter and the induced ranking depends on its value.
pub fn recovery_spec() -> RewardSpec {
    RewardSpec::from_toml_str(
        r#"
[[parameters]]
name = "unit"
default = 1.0
min = 1.0
max = 1.000000001

[[parameters]]
name = "theta"
default = 0.5
min = 0.0
max = 1.0

[[terms]]
name = "base_reward"
weight_param = "unit"
form = "feature"
feature = "a"

[[terms]]
name = "shaping_penalty"
weight_param = "theta"
form = "neg_feature"
feature = "b"
"#,
    )
    .unwrap()
}

pub fn point(id: u64, a: f64, b: f64) -> Trajectory {
    let rec = FeatureRecord::new(0, [("a", a), ("b", b)]).unwrap();
    Trajectory::from_features(TrajId(id), vec![rec], false).unwrap()
}

pub fn score(t: &Trajectory, theta: f64) -> f64 {
    let f = t.last_features();
    f.get("a").unwrap().as_real().unwrap() - theta * f.get("b").unwrap().as_real().unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, start: u64, n: usize) -> Vec<Trajectory> {
    (0..n)
        .map(|i| {
            point(
                start + i as u64,
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
            )
        })
        .collect()
}

/// Fraction of held-out pairs ordered the same way by both parameter values.
fn agreement(held: &[Trajectory], t1: f64, t2: f64) -> f64 {
    let (mut same, mut total) = (0, 0);
    for i in 0..held.len() {
        for j in i + 1..held.len() {
            let d1 = score(&held[i], t1) - score(&held[j], t1);
            let d2 = score(&held[i], t2) - score(&held[j], t2);
            total += 1;
            if (d1 > 0.0) == (d2 > 0.0) {
                same += 1;
            }
        }
    }
    same as f64 / total as f64
}

/// Independent grid search over theta in steps of 0.01 maximizing the
/// summed log-likelihood.
fn grid_optimum(pairs: &[(Trajectory, Trajectory)], beta: f64) -> f64 {
    let ll = |theta: f64| -> f64 {
        pairs
            .iter()
            .map(|(w, l)| {
                let x = beta * (score(w, theta) - score(l, theta));
                -(1.0 + (-x).exp()).ln()
            })
            .sum()
    };
    (0..=100)
        .map(|k| k as f64 / 100.0)
        .max_by(|a, b| ll(*a).total_cmp(&ll(*b)))
        .unwrap()
}

/// Returns the MAP theta and its held-out agreement with the truth and with
/// the grid optimum.
pub fn recovery(seed: u64) -> (f64, f64, f64) {
    let theta_star = 0.7;
    let beta = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = random_points(&mut rng, 0, 100);
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    while pairs.len() < 200 {
        let i = rng.random_range(0..train.len());
        let j = rng.random_range(0..train.len());
        if i == j {
            continue;
        }
        let (w, l) = if score(&train[i], theta_star) >= score(&train[j], theta_star) {
            (i, j)
        } else {
            (j, i)
        };
        pairs.push(PreferencePair::new(train[w].id(), train[l].id(), PairSource::Agreed).unwrap());
        raw.push((train[w].clone(), train[l].clone()));
    }
    let spec = recovery_spec();
    let data = PreferenceDataset::new(pairs, train, beta).unwrap();
    let config = MHConfig {
        seed,
        ..MHConfig::default()
    };
    let post = mh_chain(&data, &spec, spec.params(), &config).unwrap();
    let map = post.map_estimate.get("theta").unwrap();
    let grid = grid_optimum(&raw, beta);
    let held = random_points(&mut rng, 1000, 50);
    (
        map,
        agreement(&held, map, theta_star),
        agreement(&held, map, grid),
    )
}
