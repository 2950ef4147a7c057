//! Rankings over feedback batches, Kendall discordance, and preference
//! dataset assembly.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::{PairSource, PreferenceDataset, PreferencePair};
use crate::reward::{evaluate_return, ParamVector, RewardSpec, Trajectory};
use crate::{seed, TrajId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Reward,
    Oracle,
}

/// Trajectory ids, most preferred first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    ids: Vec<TrajId>,
    provenance: Provenance,
}

impl Ranking {
    pub fn new(ids: Vec<TrajId>, provenance: Provenance) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(*id) {
                return Err(Error::RankingMismatch(format!("id {id} appears twice")));
            }
        }
        Ok(Self { ids, provenance })
    }

    pub fn ids(&self) -> &[TrajId] {
        &self.ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn positions(&self) -> HashMap<TrajId, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect()
    }

    /// Check that this ranking is a permutation of `ids`.
    pub fn check_covers(&self, ids: &[TrajId]) -> Result<()> {
        let mine: BTreeSet<_> = self.ids.iter().collect();
        let theirs: BTreeSet<_> = ids.iter().collect();
        if mine != theirs || ids.len() != self.ids.len() {
            return Err(Error::RankingMismatch(format!(
                "ranking {:?} is not a permutation of {:?}",
                raw(&self.ids),
                raw(ids)
            )));
        }
        Ok(())
    }
}

fn raw(ids: &[TrajId]) -> Vec<u64> {
    ids.iter().map(|i| i.0).collect()
}

/// Sort ids by descending return, ties by ascending id.
pub fn rank_returns(ids: &[TrajId], returns: &[f64], provenance: Provenance) -> Ranking {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        returns[b]
            .total_cmp(&returns[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    Ranking {
        ids: order.into_iter().map(|i| ids[i]).collect(),
        provenance,
    }
}

pub fn rank_by_reward(
    batch: &[Trajectory],
    spec: &RewardSpec,
    params: &ParamVector,
) -> Result<Ranking> {
    if batch.is_empty() {
        return Err(Error::RankingMismatch("cannot rank an empty batch".into()));
    }
    let ids: Vec<TrajId> = batch.iter().map(Trajectory::id).collect();
    Ranking::new(ids.clone(), Provenance::Reward)?;
    let returns = batch
        .iter()
        .map(|t| evaluate_return(spec, params, t).map_err(|e| e.at_trajectory(t.id())))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_returns(&ids, &returns, Provenance::Reward))
}

/// Unordered pairs, stored as (smaller id, larger id), whose relative order
/// differs between the two rankings.
pub fn discrepancy_pairs(a: &Ranking, b: &Ranking) -> Result<BTreeSet<(TrajId, TrajId)>> {
    b.check_covers(&a.ids)?;
    let pos_b = b.positions();
    let mut out = BTreeSet::new();
    for (i, x) in a.ids.iter().enumerate() {
        for y in &a.ids[i + 1..] {
            if pos_b[x] > pos_b[y] {
                out.insert(if x < y { (*x, *y) } else { (*y, *x) });
            }
        }
    }
    Ok(out)
}

pub fn discrepancy_count(a: &Ranking, b: &Ranking) -> Result<usize> {
    Ok(discrepancy_pairs(a, b)?.len())
}

/// All discordant pairs plus an equal number of uniformly sampled concordant
/// pairs, oriented by the oracle ranking and shuffled with `rng_seed`.
pub fn build_preference_dataset(
    rank_reward: &Ranking,
    rank_oracle: &Ranking,
    batch: &[Trajectory],
    beta: f64,
    rng_seed: u64,
) -> Result<PreferenceDataset> {
    let ids: Vec<TrajId> = batch.iter().map(Trajectory::id).collect();
    rank_reward.check_covers(&ids)?;
    rank_oracle.check_covers(&ids)?;
    let discordant = discrepancy_pairs(rank_reward, rank_oracle)?;
    let trajectories = batch.to_vec();
    if discordant.is_empty() {
        return PreferenceDataset::new(Vec::new(), trajectories, beta);
    }

    let mut negative = Vec::new();
    let mut concordant = Vec::new();
    let o = &rank_oracle.ids;
    for i in 0..o.len() {
        for j in i + 1..o.len() {
            let key = if o[i] < o[j] {
                (o[i], o[j])
            } else {
                (o[j], o[i])
            };
            if discordant.contains(&key) {
                negative.push(PreferencePair::new(o[i], o[j], PairSource::Discrepant)?);
            } else {
                concordant.push(PreferencePair::new(o[i], o[j], PairSource::Agreed)?);
            }
        }
    }

    let mut rng = seed::rng(rng_seed);
    let k = negative.len().min(concordant.len());
    let picked = index::sample(&mut rng, concordant.len(), k);
    let mut picked: Vec<usize> = picked.into_vec();
    picked.sort_unstable();
    let mut pairs = negative;
    pairs.extend(picked.into_iter().map(|i| concordant[i]));
    pairs.shuffle(&mut rng);
    PreferenceDataset::new(pairs, trajectories, beta)
}

/// Every pair of the batch, oriented by the oracle ranking.
pub fn all_pairs_dataset(
    rank_oracle: &Ranking,
    batch: &[Trajectory],
    beta: f64,
) -> Result<PreferenceDataset> {
    let ids: Vec<TrajId> = batch.iter().map(Trajectory::id).collect();
    rank_oracle.check_covers(&ids)?;
    let o = &rank_oracle.ids;
    let mut pairs = Vec::with_capacity(o.len() * o.len().saturating_sub(1) / 2);
    for i in 0..o.len() {
        for j in i + 1..o.len() {
            pairs.push(PreferencePair::new(o[i], o[j], PairSource::Agreed)?);
        }
    }
    PreferenceDataset::new(pairs, batch.to_vec(), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{builtin_spec, FeatureRecord};

    fn ids(v: &[u64]) -> Vec<TrajId> {
        v.iter().map(|&i| TrajId(i)).collect()
    }

    fn ranking(v: &[u64], p: Provenance) -> Ranking {
        Ranking::new(ids(v), p).unwrap()
    }

    fn batch(n: u64) -> Vec<Trajectory> {
        (0..n)
            .map(|i| {
                let rec = FeatureRecord::new(0, [("distance_to_target", i as f64 * 0.1)]).unwrap();
                Trajectory::from_features(TrajId(i), vec![rec], false).unwrap()
            })
            .collect()
    }

    #[test]
    fn rank_returns_examples() {
        let r = rank_returns(&ids(&[0, 1, 2]), &[2.0, 1.0, 3.0], Provenance::Reward);
        assert_eq!(r.ids(), ids(&[2, 0, 1]));
        let r = rank_returns(&ids(&[5, 3]), &[1.0, 1.0], Provenance::Reward);
        assert_eq!(r.ids(), ids(&[3, 5]));
        let r = rank_returns(&ids(&[7]), &[0.0], Provenance::Reward);
        assert_eq!(r.ids(), ids(&[7]));
    }

    #[test]
    fn rank_by_reward_uses_returns() {
        let spec = builtin_spec("point-reach").unwrap();
        let b = batch(4);
        let r = rank_by_reward(&b, &spec, spec.params()).unwrap();
        assert_eq!(r.ids(), ids(&[0, 1, 2, 3]));
        assert!(rank_by_reward(&[], &spec, spec.params()).is_err());
    }

    #[test]
    fn discrepancy_examples() {
        let a = ranking(&[0, 1, 2], Provenance::Reward);
        assert!(discrepancy_pairs(&a, &a).unwrap().is_empty());
        let rev = ranking(&[2, 1, 0], Provenance::Oracle);
        assert_eq!(discrepancy_pairs(&a, &rev).unwrap().len(), 3);
        let a = ranking(&[0, 1, 2, 3], Provenance::Reward);
        let b = ranking(&[0, 2, 1, 3], Provenance::Oracle);
        let d = discrepancy_pairs(&a, &b).unwrap();
        assert_eq!(
            d.into_iter().collect::<Vec<_>>(),
            vec![(TrajId(1), TrajId(2))]
        );
        let c = ranking(&[0, 1, 9], Provenance::Oracle);
        assert!(discrepancy_pairs(&ranking(&[0, 1, 2], Provenance::Reward), &c).is_err());
        assert!(Ranking::new(ids(&[1, 1]), Provenance::Oracle).is_err());
    }

    #[test]
    fn dataset_equal_counts() {
        let b = batch(4);
        let reward = ranking(&[0, 1, 2, 3], Provenance::Reward);
        let oracle = ranking(&[1, 0, 3, 2], Provenance::Oracle);
        let ds = build_preference_dataset(&reward, &oracle, &b, 0.9, 1).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.count(PairSource::Discrepant), 2);
        assert_eq!(ds.count(PairSource::Agreed), 2);

        let ds = build_preference_dataset(&reward, &reward, &b, 0.9, 1).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn dataset_caps_concordant_at_available() {
        // reversing the first three of four: 3 discordant, 3 concordant
        let b = batch(4);
        let reward = ranking(&[0, 1, 2, 3], Provenance::Reward);
        let oracle = ranking(&[2, 1, 0, 3], Provenance::Oracle);
        let ds = build_preference_dataset(&reward, &oracle, &b, 0.9, 3).unwrap();
        assert_eq!(ds.count(PairSource::Discrepant), 3);
        assert_eq!(ds.count(PairSource::Agreed), 3);

        // 5 discordant, 1 concordant -> 6
        let oracle = ranking(&[3, 2, 0, 1], Provenance::Oracle);
        let ds = build_preference_dataset(&reward, &oracle, &b, 0.9, 3).unwrap();
        assert_eq!(ds.count(PairSource::Discrepant), 5);
        assert_eq!(ds.count(PairSource::Agreed), 1);
    }

    #[test]
    fn pairs_follow_oracle_order() {
        let b = batch(6);
        let reward = ranking(&[0, 1, 2, 3, 4, 5], Provenance::Reward);
        let oracle = ranking(&[4, 1, 0, 5, 3, 2], Provenance::Oracle);
        let pos = oracle.positions();
        for s in 0..20 {
            let ds = build_preference_dataset(&reward, &oracle, &b, 0.9, s).unwrap();
            for p in ds.pairs() {
                assert!(pos[&p.preferred()] < pos[&p.dispreferred()]);
            }
        }
        let all = all_pairs_dataset(&oracle, &b, 0.9).unwrap();
        assert_eq!(all.len(), 15);
    }
}
