#[path = "support/recovery.rs"]
mod recovery;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recovery::{point, recovery, recovery_spec, score};
use reward_align::inference::{mh_chain, radius_constrained_update, MHConfig};
use reward_align::preference::{log_posterior, PairSource, PreferenceDataset, PreferencePair};
use reward_align::ranking::{discrepancy_count, rank_returns, Provenance, Ranking};
use reward_align::reward::{normalize, ParamVector, RewardSpec, Trajectory};
use reward_align::TrajId;

#[test]
fn one_parameter_recovery() {
    for seed in 0..5 {
        let (map, vs_truth, vs_grid) = recovery(seed);
        assert!(
            vs_truth >= 0.95,
            "seed {seed}: theta {map}, agreement with truth {vs_truth}"
        );
        assert!(
            vs_grid >= 0.95,
            "seed {seed}: theta {map}, agreement with grid {vs_grid}"
        );
    }
}

fn small_problem() -> (RewardSpec, PreferenceDataset) {
    let spec = recovery_spec();
    let trajs = vec![point(0, 0.6, 0.9), point(1, 0.5, 0.1), point(2, 0.0, 0.0)];
    let pairs = vec![
        PreferencePair::new(TrajId(0), TrajId(1), PairSource::Discrepant).unwrap(),
        PreferencePair::new(TrajId(1), TrajId(2), PairSource::Agreed).unwrap(),
    ];
    (spec, PreferenceDataset::new(pairs, trajs, 0.9).unwrap())
}

#[test]
fn chain_contracts() {
    let (spec, data) = small_problem();
    let config = MHConfig {
        seed: 11,
        ..MHConfig::default()
    };
    let a = mh_chain(&data, &spec, spec.params(), &config).unwrap();
    let b = mh_chain(&data, &spec, spec.params(), &config).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.map_log_posterior.to_bits(), b.map_log_posterior.to_bits());
    assert_eq!(a.samples.len(), 100);
    assert_eq!(a.trace.len(), 300);
    for (s, lp) in a.samples.iter().zip(&a.sample_log_posteriors) {
        assert!(normalize(s)
            .unwrap()
            .iter()
            .all(|u| (0.0..=1.0).contains(u)));
        assert!(a.map_log_posterior >= *lp);
        let direct = log_posterior(s, &data, &spec).unwrap();
        assert!((direct - lp).abs() < 1e-9);
    }
    assert!((0.0..=1.0).contains(&a.acceptance_rate));

    let frozen = MHConfig {
        proposal_sigma: 1e-12,
        ..config.clone()
    };
    let still = mh_chain(&data, &spec, spec.params(), &frozen).unwrap();
    let init = spec.params().values();
    assert!(still
        .samples
        .iter()
        .all(|s| s.distance(spec.params()) < 1e-9));
    assert!(still
        .map_estimate
        .values()
        .iter()
        .zip(init)
        .all(|(x, y)| (x - y).abs() < 1e-9));

    let empty = data.with_pairs(Vec::new()).unwrap();
    let flat = mh_chain(&empty, &spec, spec.params(), &config).unwrap();
    assert_eq!(flat.map_log_posterior, 0.0);
}

#[test]
fn chain_errors() {
    let (spec, data) = small_problem();
    let mut out = spec.params().clone();
    out.domain_mut("theta").unwrap().restrict(0.8, 1.0).unwrap();
    assert!(mh_chain(&data, &spec, &out, &MHConfig::default()).is_err());
    let stray = PreferencePair::new(TrajId(0), TrajId(9), PairSource::Agreed).unwrap();
    assert!(data.with_pairs(vec![stray]).is_err());
}

fn ranking_under(data: &PreferenceDataset, theta: f64) -> Ranking {
    let ids: Vec<TrajId> = data.trajectories().iter().map(|t| t.id()).collect();
    let r: Vec<f64> = data
        .trajectories()
        .iter()
        .map(|t| score(t, theta))
        .collect();
    rank_returns(&ids, &r, Provenance::Reward)
}

#[test]
fn update_fixes_a_misordered_pair() {
    let (spec, data) = small_problem();
    // truth theta = 0.1 prefers 0 over 1; the current 0.5 does not
    let oracle = ranking_under(&data, 0.1);
    let oracle = Ranking::new(oracle.ids().to_vec(), Provenance::Oracle).unwrap();
    let current = spec.params_with([("theta", 0.5)]).unwrap();
    let before = discrepancy_count(&ranking_under(&data, 0.5), &oracle).unwrap();
    assert_eq!(before, 1);
    let upd = radius_constrained_update(
        &current,
        &data,
        &spec,
        &oracle,
        &[1.0, 3.0, 5.0, 10.0],
        &MHConfig::default(),
    )
    .unwrap();
    assert!(upd.accepted);
    assert_eq!(upd.discrepancy_before, 1);
    assert_eq!(upd.discrepancy_after, 0);
    let theta = upd.params.get("theta").unwrap();
    assert_eq!(
        discrepancy_count(&ranking_under(&data, theta), &oracle).unwrap(),
        0
    );
    assert!(upd.distance_to_current <= upd.radius);

    // already consistent: nothing moves
    let same = radius_constrained_update(
        &upd.params,
        &data,
        &spec,
        &oracle,
        &[1.0],
        &MHConfig::default(),
    )
    .unwrap();
    assert_eq!(same.params, upd.params);
    assert_eq!(same.radius, 0.0);
    assert_eq!(same.discrepancy_after, 0);

    assert!(
        radius_constrained_update(&current, &data, &spec, &oracle, &[], &MHConfig::default())
            .is_err()
    );
    assert!(radius_constrained_update(
        &current,
        &data,
        &spec,
        &oracle,
        &[0.0],
        &MHConfig::default()
    )
    .is_err());
}

fn two_weight_spec() -> RewardSpec {
    RewardSpec::from_toml_str(
        r#"
[[parameters]]
name = "wa"
default = 1.0
min = 0.0
max = 10.0

[[parameters]]
name = "wb"
default = 1.0
min = 0.0
max = 10.0

[[terms]]
name = "a_reward"
weight_param = "wa"
form = "feature"
feature = "a"

[[terms]]
name = "b_penalty"
weight_param = "wb"
form = "neg_feature"
feature = "b"
"#,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn update_never_increases_discrepancy(
        feats in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..7),
        order_seed in any::<u64>(),
        wa in 0.0f64..10.0,
        wb in 0.0f64..10.0,
        radius in 0.2f64..4.0,
    ) {
        let spec = two_weight_spec();
        let trajs: Vec<Trajectory> =
            feats.iter().enumerate().map(|(i, (a, b))| point(i as u64, *a, *b)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
        let mut ids: Vec<TrajId> = trajs.iter().map(|t| t.id()).collect();
        rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
        let oracle = Ranking::new(ids.clone(), Provenance::Oracle).unwrap();
        let pairs = (0..ids.len())
            .flat_map(|i| (i + 1..ids.len()).map(move |j| (i, j)))
            .map(|(i, j)| PreferencePair::new(ids[i], ids[j], PairSource::Agreed).unwrap())
            .collect();
        let data = PreferenceDataset::new(pairs, trajs, 0.9).unwrap();
        let current: ParamVector = spec.params_with([("wa", wa), ("wb", wb)]).unwrap();
        let config = MHConfig { burn_in: 20, n_samples: 20, ..MHConfig::default() };
        let upd = radius_constrained_update(&current, &data, &spec, &oracle, &[radius], &config).unwrap();
        prop_assert!(upd.discrepancy_after <= upd.discrepancy_before);
        prop_assert!(upd.params.distance(&current) <= upd.radius + 1e-9);
        if !upd.accepted {
            prop_assert_eq!(&upd.params, &current);
        }
    }
}
