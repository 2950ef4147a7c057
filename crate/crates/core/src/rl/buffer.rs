use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::Result;
use crate::reward::{CompiledReward, ParamVector, RewardSpec, Trajectory};
use crate::seed;

/// One stored rollout. Only features (inside the trajectory) are kept; the
/// return is recomputed under whatever parameters are current.
#[derive(Clone, Debug)]
pub struct BufferEntry {
    pub trajectory: Trajectory,
    /// Return under the parameters in force when the rollout was collected.
    pub collection_return: f64,
    pub collection_params: Arc<ParamVector>,
}

/// FIFO replay buffer.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<BufferEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: BufferEntry) {
        if self.capacity == 0 {
            return;
        }
        while self.entries.len() >= self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    /// Entries oldest first.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &BufferEntry> {
        self.entries.iter()
    }
}

pub const DEFAULT_BINS: usize = 5;

/// Draw up to `n` trajectories spread evenly over an equal-width histogram of
/// their returns under `params`.
///
/// Bins are visited in ascending-return order, skipping empty ones, and each
/// visit takes one entry uniformly at random without replacement. When all
/// returns are equal the draw is uniform over the buffer.
pub fn histogram_sample(
    buffer: &ReplayBuffer,
    spec: &RewardSpec,
    params: &ParamVector,
    n: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    assert!(bins >= 1, "histogram needs at least one bin");
    if buffer.is_empty() || n == 0 {
        return Ok(Vec::new());
    }
    let reward = CompiledReward::new(spec);
    reward.check_layout(params)?;
    let returns: Vec<f64> = buffer
        .iter()
        .map(|e| {
            reward
                .trajectory_return(&e.trajectory, params.values())
                .map_err(|err| err.at_trajectory(e.trajectory.id()))
        })
        .collect::<Result<_>>()?;
    let mut rng = seed::derived_rng(seed, "histogram", 0);
    let entries: Vec<&BufferEntry> = buffer.iter().collect();

    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || !(hi - lo).is_finite() {
        let k = n.min(entries.len());
        return Ok(sample(&mut rng, entries.len(), k)
            .into_iter()
            .map(|i| entries[i].trajectory.clone())
            .collect());
    }

    let width = (hi - lo) / bins as f64;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, r) in returns.iter().enumerate() {
        let b = (((r - lo) / width) as usize).min(bins - 1);
        groups[b].push(i);
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n && groups.iter().any(|g| !g.is_empty()) {
        for g in groups.iter_mut() {
            if out.len() == n {
                break;
            }
            if g.is_empty() {
                continue;
            }
            let pick = rng.random_range(0..g.len());
            // keep remaining members in buffer order
            let idx = g.remove(pick);
            out.push(entries[idx].trajectory.clone());
        }
    }
    Ok(out)
}
