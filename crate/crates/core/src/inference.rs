//! Posterior sampling and the radius-bounded parameter search.
//!
//! Chains run random-walk Metropolis in normalized coordinates (each
//! parameter mapped to [0, 1] over its full domain). Proposals are clipped
//! back into the unit cube; proposals outside the active box, or outside the
//! search ball, score `-inf` and are always rejected.
//!
//! Radii are in raw parameter units.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::{PreferenceDataset, PreferenceModel};
use crate::ranking::{discrepancy_count, rank_returns, Provenance, Ranking};
use crate::reward::{normalize, raw_distance, ParamVector, RewardSpec};
use crate::seed;

pub const DEFAULT_RADII: [f64; 4] = [1.0, 3.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MHConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub proposal_sigma: f64,
    pub seed: u64,
}

impl Default for MHConfig {
    fn default() -> Self {
        Self {
            burn_in: 200,
            n_samples: 100,
            proposal_sigma: 0.2,
            seed: 0,
        }
    }
}

impl MHConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("mh.n_samples must be >= 1".into()));
        }
        if !(self.proposal_sigma > 0.0 && self.proposal_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "mh.proposal_sigma must be a positive finite number, got {}",
                self.proposal_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub log_posterior: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct PosteriorResult {
    pub samples: Vec<ParamVector>,
    pub sample_log_posteriors: Vec<f64>,
    pub map_estimate: ParamVector,
    pub map_log_posterior: f64,
    pub acceptance_rate: f64,
    pub trace: Vec<TraceRow>,
}

impl PosteriorResult {
    /// Write the chain trace as CSV (`step,log_posterior,accepted`).
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CandidateUpdate {
    pub params: ParamVector,
    /// Radius of the winning chain; 0 when `current` is returned.
    pub radius: f64,
    pub discrepancy_before: usize,
    pub discrepancy_after: usize,
    pub distance_to_current: f64,
    pub accepted: bool,
}

/// Log-posterior restricted to the active box and an optional raw-unit ball.
struct Target<'a> {
    model: &'a PreferenceModel,
    lo: Vec<f64>,
    hi: Vec<f64>,
    ball: Option<(&'a [f64], f64)>,
}

impl<'a> Target<'a> {
    fn new(model: &'a PreferenceModel, like: &ParamVector, ball: Option<(&'a [f64], f64)>) -> Self {
        Self {
            model,
            lo: like.domains().iter().map(|d| d.active_min()).collect(),
            hi: like.domains().iter().map(|d| d.active_max()).collect(),
            ball,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi);
        if !inside {
            return f64::NEG_INFINITY;
        }
        if let Some((center, r)) = self.ball {
            if raw_distance(x, center) > r {
                return f64::NEG_INFINITY;
            }
        }
        self.model.log_likelihood(x)
    }
}

fn run_chain(target: &Target, init: &ParamVector, config: &MHConfig) -> Result<PosteriorResult> {
    config.validate()?;
    let domains = init.domains();
    let d = init.len();
    let mut x: Vec<f64> = init.values().to_vec();
    let mut u: Vec<f64> = x
        .iter()
        .zip(domains)
        .map(|(v, dom)| dom.normalize(*v))
        .collect();
    if u.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::DegenerateChain(
            "initial parameters lie outside their full domains".into(),
        ));
    }
    let mut lp = target.eval(&x);
    if lp == f64::NEG_INFINITY || lp.is_nan() {
        return Err(Error::DegenerateChain(
            "initial parameters have zero posterior density".into(),
        ));
    }

    let mut rng = seed::rng(config.seed);
    let mut best_x = x.clone();
    let mut best_lp = lp;
    let total = config.burn_in + config.n_samples;
    let mut samples = Vec::with_capacity(config.n_samples);
    let mut sample_lps = Vec::with_capacity(config.n_samples);
    let mut trace = Vec::with_capacity(total);
    let mut accepted_count = 0usize;
    let mut u_prop = vec![0.0; d];
    let mut x_prop = vec![0.0; d];

    for step in 0..total {
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            u_prop[k] = (u[k] + config.proposal_sigma * z).clamp(0.0, 1.0);
            x_prop[k] = domains[k].denormalize(u_prop[k]);
        }
        let lp_prop = target.eval(&x_prop);
        let threshold: f64 = rng.random::<f64>().ln();
        let accept = threshold < lp_prop - lp;
        if accept {
            std::mem::swap(&mut u, &mut u_prop);
            std::mem::swap(&mut x, &mut x_prop);
            lp = lp_prop;
            accepted_count += 1;
            if lp > best_lp {
                best_lp = lp;
                best_x.copy_from_slice(&x);
            }
        }
        assert!(
            u.iter().all(|c| (0.0..=1.0).contains(c)),
            "chain left the unit cube"
        );
        trace.push(TraceRow {
            step,
            log_posterior: lp,
            accepted: accept,
        });
        if step >= config.burn_in {
            samples.push(init.with_values(x.clone()));
            sample_lps.push(lp);
        }
    }

    Ok(PosteriorResult {
        samples,
        sample_log_posteriors: sample_lps,
        map_estimate: init.with_values(best_x),
        map_log_posterior: best_lp,
        acceptance_rate: accepted_count as f64 / total as f64,
        trace,
    })
}

/// Random-walk Metropolis over the posterior of `dataset` under `spec`.
pub fn mh_chain(
    dataset: &PreferenceDataset,
    spec: &RewardSpec,
    init: &ParamVector,
    config: &MHConfig,
) -> Result<PosteriorResult> {
    let model = PreferenceModel::new(dataset, spec)?;
    model.check_layout(init)?;
    run_chain(&Target::new(&model, init, None), init, config)
}

/// One chain per radius, in parallel; keep the MAP estimate that best reduces
/// discrepancy against `oracle` (nearest to `current` on ties). `current` is
/// returned unchanged when no candidate qualifies.
///
/// A candidate qualifies when its discrepancy is below `current`'s, or when
/// both are zero. If `current` already lies in the active box with zero
/// discrepancy, nothing is searched.
pub fn radius_constrained_update(
    current: &ParamVector,
    dataset: &PreferenceDataset,
    spec: &RewardSpec,
    oracle: &Ranking,
    radii: &[f64],
    config: &MHConfig,
) -> Result<CandidateUpdate> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Config(format!(
            "radii must be nonempty and strictly positive, got {radii:?}"
        )));
    }
    config.validate()?;
    let model = PreferenceModel::new(dataset, spec)?;
    model.check_layout(current)?;
    normalize(current)?;
    let discrepancy_of = |x: &[f64]| -> Result<usize> {
        let ranking = rank_returns(model.ids(), &model.returns(x), Provenance::Reward);
        discrepancy_count(&ranking, oracle)
    };
    let before = discrepancy_of(current.values())?;
    let unchanged = |before| CandidateUpdate {
        params: current.clone(),
        radius: 0.0,
        discrepancy_before: before,
        discrepancy_after: before,
        distance_to_current: 0.0,
        accepted: false,
    };
    if before == 0 && current.in_active_domain() {
        return Ok(unchanged(before));
    }

    let init = current.with_values(
        current
            .values()
            .iter()
            .zip(current.domains())
            .map(|(v, d)| d.clamp_active(*v))
            .collect(),
    );
    let center = current.values();
    let chains: Vec<Result<Option<(f64, ParamVector)>>> = radii
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            if raw_distance(init.values(), center) > r {
                return Ok(None);
            }
            let cfg = MHConfig {
                seed: seed::derive(config.seed, "radius-chain", i as u64),
                ..config.clone()
            };
            let target = Target::new(&model, &init, Some((center, r)));
            let result = run_chain(&target, &init, &cfg)?;
            Ok(Some((r, result.map_estimate)))
        })
        .collect();

    let mut best: Option<CandidateUpdate> = None;
    for chain in chains {
        let Some((radius, params)) = chain? else {
            continue;
        };
        let after = discrepancy_of(params.values())?;
        let qualifies = after < before || (after == 0 && before == 0);
        if !qualifies {
            continue;
        }
        let distance = params.distance(current);
        let better = match &best {
            None => true,
            Some(b) => {
                after < b.discrepancy_after
                    || (after == b.discrepancy_after && distance < b.distance_to_current)
            }
        };
        if better {
            best = Some(CandidateUpdate {
                params,
                radius,
                discrepancy_before: before,
                discrepancy_after: after,
                distance_to_current: distance,
                accepted: true,
            });
        }
    }
    let out = best.unwrap_or_else(|| unchanged(before));
    assert!(
        out.discrepancy_after <= out.discrepancy_before,
        "update increased discrepancy"
    );
    assert!(out.distance_to_current <= out.radius || !out.accepted);
    Ok(out)
}
