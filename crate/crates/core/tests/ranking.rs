use std::sync::Arc;

use proptest::prelude::*;
use proptest::sample::subsequence;
use reward_align::preference::PairSource;
use reward_align::ranking::{
    all_pairs_dataset, build_preference_dataset, discrepancy_count, discrepancy_pairs,
    rank_returns, Provenance, Ranking,
};
use reward_align::reward::{FeatureRecord, RewardSpec, Trajectory};
use reward_align::rl::{histogram_sample, BufferEntry, ReplayBuffer};
use reward_align::TrajId;

fn ranking(ids: &[u64], p: Provenance) -> Ranking {
    Ranking::new(ids.iter().map(|&i| TrajId(i)).collect(), p).unwrap()
}

fn brute_force(a: &[u64], b: &[u64]) -> usize {
    let pos = |r: &[u64], x: u64| r.iter().position(|&y| y == x).unwrap();
    let mut n = 0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            let (x, y) = (a[i], a[j]);
            if x < y && (pos(a, x) < pos(a, y)) != (pos(b, x) < pos(b, y)) {
                n += 1;
            }
        }
    }
    n
}

fn two_orders() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
    (2usize..=10).prop_flat_map(|n| {
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + 3).collect();
        (Just(ids.clone()).prop_shuffle(), Just(ids).prop_shuffle())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn discrepancy_equals_brute_force((a, b) in two_orders()) {
        let ra = ranking(&a, Provenance::Reward);
        let rb = ranking(&b, Provenance::Oracle);
        let n = brute_force(&a, &b);
        prop_assert_eq!(discrepancy_count(&ra, &rb).unwrap(), n);
        prop_assert_eq!(discrepancy_count(&rb, &ra).unwrap(), n);
        prop_assert_eq!(discrepancy_count(&ra, &ra).unwrap(), 0);
        for (x, y) in discrepancy_pairs(&ra, &rb).unwrap() {
            prop_assert!(x < y);
        }
    }

    #[test]
    fn dataset_balances_discordant_and_agreed((a, b) in two_orders(), seed in any::<u64>()) {
        let batch: Vec<Trajectory> = a.iter().map(|&i| one_step(i, 0.0)).collect();
        let ra = ranking(&a, Provenance::Reward);
        let rb = ranking(&b, Provenance::Oracle);
        let d = build_preference_dataset(&ra, &rb, &batch, 0.9, seed).unwrap();
        let neg = d.count(PairSource::Discrepant);
        let n = a.len();
        prop_assert_eq!(neg, brute_force(&a, &b));
        prop_assert_eq!(d.count(PairSource::Agreed), neg.min(n * (n - 1) / 2 - neg));
        let pos = |x: TrajId| b.iter().position(|&y| TrajId(y) == x).unwrap();
        for p in d.pairs() {
            prop_assert!(pos(p.preferred()) < pos(p.dispreferred()));
        }
    }
}

fn one_step(id: u64, x: f64) -> Trajectory {
    let rec = FeatureRecord::new(0, [("x", x)]).unwrap();
    Trajectory::from_features(TrajId(id), vec![rec], false).unwrap()
}

#[test]
fn worked_discrepancy_and_ties() {
    let r = ranking(&[1, 2, 3, 4], Provenance::Reward);
    let o = ranking(&[2, 1, 4, 3], Provenance::Oracle);
    let pairs = discrepancy_pairs(&r, &o).unwrap();
    assert_eq!(
        pairs.into_iter().collect::<Vec<_>>(),
        vec![(TrajId(1), TrajId(2)), (TrajId(3), TrajId(4))]
    );
    let tied = rank_returns(&[TrajId(5), TrajId(3)], &[1.0, 1.0], Provenance::Reward);
    assert_eq!(tied.ids(), &[TrajId(3), TrajId(5)]);
    let short = ranking(&[1, 2], Provenance::Oracle);
    assert!(discrepancy_count(&r, &short).is_err());
}

#[test]
fn all_pairs_follow_the_oracle() {
    let batch: Vec<Trajectory> = (0..4).map(|i| one_step(i, 0.0)).collect();
    let o = ranking(&[2, 0, 3, 1], Provenance::Oracle);
    let d = all_pairs_dataset(&o, &batch, 0.9).unwrap();
    assert_eq!(d.len(), 6);
    assert_eq!(d.pairs()[0].preferred(), TrajId(2));
}

fn spec() -> RewardSpec {
    RewardSpec::from_toml_str(
        "[[parameters]]\nname = \"w\"\ndefault = 1.0\nmin = 0.0\nmax = 2.0\n\n\
         [[terms]]\nname = \"x_reward\"\nweight_param = \"w\"\nform = \"feature\"\nfeature = \"x\"\n",
    )
    .unwrap()
}

fn buffer(returns: &[f64]) -> ReplayBuffer {
    let spec = spec();
    let params = Arc::new(spec.params().clone());
    let mut b = ReplayBuffer::new(returns.len().max(1));
    for (i, &r) in returns.iter().enumerate() {
        b.push(BufferEntry {
            trajectory: one_step(i as u64, r),
            collection_return: r,
            collection_params: Arc::clone(&params),
        });
    }
    b
}

#[test]
fn histogram_one_per_bin_for_uniform_returns() {
    let returns: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let spec = spec();
    let out = histogram_sample(&buffer(&returns), &spec, spec.params(), 5, 5, 3).unwrap();
    let mut bins: Vec<usize> = out
        .iter()
        .map(|t| ((t.id().0 as f64 / 49.0 / 0.2) as usize).min(4))
        .collect();
    bins.sort_unstable();
    assert_eq!(bins, vec![0, 1, 2, 3, 4]);
}

proptest! {
    #[test]
    fn histogram_covers_every_nonempty_bin(
        mut returns in proptest::collection::vec(0.0f64..10.0, 10..60),
        n in 5usize..15,
        seed in any::<u64>(),
    ) {
        // pin both ends so every bin has at least one member
        returns.extend([0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let spec = spec();
        let out = histogram_sample(&buffer(&returns), &spec, spec.params(), n, 5, seed).unwrap();
        prop_assert_eq!(out.len(), n);
        let bin = |r: f64| ((r / 2.0) as usize).min(4);
        let mut counts = [0usize; 5];
        let mut sizes = [0usize; 5];
        for t in &out {
            counts[bin(returns[t.id().0 as usize])] += 1;
        }
        for r in &returns {
            sizes[bin(*r)] += 1;
        }
        for (c, size) in counts.iter().zip(sizes) {
            prop_assert!(*c >= (n / 5).min(size));
        }
        let mut ids: Vec<u64> = out.iter().map(|t| t.id().0).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn histogram_returns_fewer_when_buffer_small(
        returns in subsequence(vec![0.5, 1.0, 1.5, 2.0], 0..4),
        seed in any::<u64>(),
    ) {
        let spec = spec();
        let out = histogram_sample(&buffer(&returns), &spec, spec.params(), 5, 5, seed).unwrap();
        prop_assert_eq!(out.len(), returns.len());
    }
}
