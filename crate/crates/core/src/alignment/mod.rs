//! The outer self-alignment loop and its run directory.
//!
//! Each iteration trains the policy on the current reward, samples a batch of
//! fresh rollouts plus histogram draws from the replay buffer, and compares
//! the reward's ranking of that batch with the oracle's. Disagreements feed a
//! radius-bounded MAP update; full agreement with a stalled policy triggers
//! reflection and a search restricted to the suggested directions.

mod artifacts;
mod config;
mod replay;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::inference::{radius_constrained_update, MHConfig};
use crate::oracle::{make_oracle, Adjustment, Oracle, PromptContext, ReflectionResult, TokenUsage};
use crate::ranking::{
    all_pairs_dataset, build_preference_dataset, discrepancy_count, rank_returns, Provenance,
    Ranking,
};
use crate::reward::{CompiledReward, ParamVector, RewardSpec, Trajectory};
use crate::rl::{
    histogram_sample, rollout, success_rate, train_policy, CEMConfig, IdCounter, Policy,
    ReplayBuffer,
};
use crate::seed;

pub use artifacts::{RankingRecord, StepRecord, Summary, Termination, METRICS_HEADER};
pub use config::{AlignmentConfig, RunConfig};
pub use replay::{compare, replay, seed_dirs, ReplayReport, COMPARE_HEADER};

/// Which update path an iteration took.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Nothing to do: rankings agree and the policy is good enough, or the
    /// relevant branch is disabled.
    None,
    Bayesian,
    Active,
    /// The oracle failed; parameters were left alone.
    Skipped,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::None => "none",
            Branch::Bayesian => "bayesian",
            Branch::Active => "active",
            Branch::Skipped => "skipped",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub inconsistency_before: Option<usize>,
    pub inconsistency_after: Option<usize>,
    /// Greedy success rate of the policy trained this iteration.
    pub success_rate: f64,
    pub params_before: Vec<f64>,
    pub params_after: Vec<f64>,
    pub branch: Branch,
    pub adjustment_fired: bool,
    pub directions: Option<ReflectionResult>,
    pub accepted: bool,
    pub radius: Option<f64>,
    pub batch_size: usize,
    pub error: Option<String>,
}

/// Everything an iteration produced, for logging.
#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub report: IterationReport,
    pub policy: Policy,
    pub batch: Vec<Trajectory>,
    pub oracle_ranking: Option<Ranking>,
    /// Returns of the batch under the parameters in force at ranking time.
    pub returns_before: Vec<f64>,
    pub transcript: String,
}

/// Mutable state carried across iterations.
pub struct RunState {
    pub env: Arc<dyn Environment>,
    pub spec: RewardSpec,
    pub params: ParamVector,
    pub policy: Policy,
    pub buffer: ReplayBuffer,
    pub ids: IdCounter,
    pub oracle: Box<dyn Oracle>,
}

impl RunState {
    pub fn new(
        env: Arc<dyn Environment>,
        spec: RewardSpec,
        params: ParamVector,
        oracle: Box<dyn Oracle>,
        config: &AlignmentConfig,
    ) -> Result<Self> {
        CompiledReward::new(&spec).check_layout(&params)?;
        params.check_domain()?;
        let policy = Policy::for_env(env.as_ref(), config.policy_noise);
        Ok(Self {
            env,
            spec,
            params,
            policy,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            ids: IdCounter::default(),
            oracle,
        })
    }

    pub fn from_run_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.environment()?;
        let spec = config.reward_spec(env.as_ref())?;
        let params = config.initial_params(&spec)?;
        let mut oracle_cfg = config.alignment.oracle.clone();
        oracle_cfg.seed = seed::derive(config.alignment.seed, "oracle", oracle_cfg.seed);
        let oracle = make_oracle(&oracle_cfg)?;
        Self::new(env, spec, params, oracle, &config.alignment)
    }
}

fn context<'a>(
    env: &'a dyn Environment,
    spec: &'a RewardSpec,
    params: &'a ParamVector,
) -> PromptContext<'a> {
    PromptContext {
        env: env.spec(),
        task_description: env.spec().task_description,
        spec,
        params,
    }
}

/// Seed of the fixed evaluation block for a run.
pub fn evaluation_seed(run_seed: u64) -> u64 {
    seed::derive(run_seed, "evaluation-block", 0)
}

fn restrict(params: &ParamVector, reflection: &ReflectionResult) -> (ParamVector, Vec<String>) {
    let mut restricted = params.clone();
    let mut applied = Vec::new();
    for (name, dir) in reflection.changes() {
        let Some(cur) = params.get(name) else {
            continue;
        };
        let dom = restricted.domain_mut(name).expect("name checked above");
        let ok = match dir {
            Adjustment::Increase => dom.restrict_above(cur),
            Adjustment::Decrease => dom.restrict_below(cur),
            Adjustment::NoChange => continue,
        };
        match ok {
            Ok(()) => applied.push(name.to_string()),
            Err(e) => warn!("cannot move `{name}` {dir}: {e}"),
        }
    }
    (restricted, applied)
}

/// One pass of the outer loop. Oracle failures are reported, not raised.
pub fn run_iteration(
    state: &mut RunState,
    config: &AlignmentConfig,
    iteration: usize,
) -> Result<IterationOutcome> {
    let k = iteration as u64;
    let run_seed = config.seed;
    let env = Arc::clone(&state.env);
    let params_before = state.params.clone();

    // inner loop
    let cem = CEMConfig {
        seed: seed::derive(run_seed, "cem", k),
        ..config.cem.clone()
    };
    let trained = train_policy(
        env.as_ref(),
        &state.spec,
        &state.params,
        &state.policy,
        &cem,
        &mut state.buffer,
        &mut state.ids,
    )?;
    state.policy = trained.policy;
    let success = success_rate(
        env.as_ref(),
        &state.policy,
        config.eval_episodes,
        evaluation_seed(run_seed),
    );

    // feedback batch
    let mut batch = rollout(
        env.as_ref(),
        &state.policy,
        config.rollouts,
        seed::derive(run_seed, "rollout", k),
        &mut state.ids,
    );
    batch.extend(histogram_sample(
        &state.buffer,
        &state.spec,
        &state.params,
        config.histogram_samples,
        config.histogram_bins,
        seed::derive(run_seed, "histogram", k),
    )?);
    let reward = CompiledReward::new(&state.spec);
    let returns_before = batch
        .iter()
        .map(|t| {
            reward
                .trajectory_return(t, state.params.values())
                .map_err(|e| e.at_trajectory(t.id()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let ids: Vec<_> = batch.iter().map(Trajectory::id).collect();
    let rank_reward = rank_returns(&ids, &returns_before, Provenance::Reward);

    let mut report = IterationReport {
        iteration,
        inconsistency_before: None,
        inconsistency_after: None,
        success_rate: success,
        params_before: params_before.values().to_vec(),
        params_after: params_before.values().to_vec(),
        branch: Branch::None,
        adjustment_fired: false,
        directions: None,
        accepted: false,
        radius: None,
        batch_size: batch.len(),
        error: None,
    };
    let outcome =
        |report: IterationReport, ranking: Option<Ranking>, transcript: String| IterationOutcome {
            report,
            policy: state.policy.clone(),
            batch: batch.clone(),
            oracle_ranking: ranking,
            returns_before: returns_before.clone(),
            transcript,
        };

    let call = match state
        .oracle
        .rank(&batch, &context(env.as_ref(), &state.spec, &state.params))
    {
        Ok(c) => c,
        Err(e) => {
            warn!(iteration, "oracle ranking failed: {e}");
            report.branch = Branch::Skipped;
            report.error = Some(e.to_string());
            let transcript = format!("### error\n{e}\n");
            return Ok(outcome(report, None, transcript));
        }
    };
    let rank_oracle = call.value;
    let mut transcript = call.transcript;
    let before = discrepancy_count(&rank_reward, &rank_oracle)?;
    report.inconsistency_before = Some(before);
    report.inconsistency_after = Some(before);
    let mh = MHConfig {
        seed: seed::derive(run_seed, "mh", k),
        ..config.mh.clone()
    };

    if before > 0 {
        if config.bayesian_update {
            report.branch = Branch::Bayesian;
            let dataset = build_preference_dataset(
                &rank_reward,
                &rank_oracle,
                &batch,
                config.beta,
                seed::derive(run_seed, "pairs", k),
            )?;
            let cand = radius_constrained_update(
                &state.params,
                &dataset,
                &state.spec,
                &rank_oracle,
                &config.radii,
                &mh,
            )?;
            if cand.accepted {
                state.params = cand.params;
                report.accepted = true;
                report.radius = Some(cand.radius);
                report.inconsistency_after = Some(cand.discrepancy_after);
            }
        }
    } else if success < config.adjust_threshold && config.active_adjustment {
        report.branch = Branch::Active;
        report.adjustment_fired = true;
        let reflection = match state
            .oracle
            .reflect(&batch, &context(env.as_ref(), &state.spec, &state.params))
        {
            Ok(r) => r,
            Err(e) => {
                warn!(iteration, "oracle reflection failed: {e}");
                report.error = Some(e.to_string());
                transcript.push_str(&format!("\n### error\n{e}\n"));
                return Ok(outcome(report, Some(rank_oracle), transcript));
            }
        };
        transcript.push('\n');
        transcript.push_str(&reflection.transcript);
        let directions = reflection.value;
        let (restricted, applied) = restrict(&state.params, &directions);
        report.directions = Some(directions);
        if !applied.is_empty() {
            let dataset = all_pairs_dataset(&rank_oracle, &batch, config.beta)?;
            let cand = radius_constrained_update(
                &restricted,
                &dataset,
                &state.spec,
                &rank_oracle,
                &config.radii,
                &mh,
            )?;
            if cand.accepted && cand.discrepancy_after == 0 {
                let mut p = cand.params;
                p.restore_domains();
                state.params = p;
                report.accepted = true;
                report.radius = Some(cand.radius);
                report.inconsistency_after = Some(0);
            }
        }
    }
    debug_assert!(state.params.domains_restored());
    report.params_after = state.params.values().to_vec();
    info!(
        iteration,
        success,
        before,
        after = report.inconsistency_after,
        branch = report.branch.as_str(),
        accepted = report.accepted,
        "iteration done"
    );
    Ok(outcome(report, Some(rank_oracle), transcript))
}

/// Run one seed's experiment into `dir` (created if needed).
pub fn run_experiment(config: &RunConfig, dir: &Path) -> Result<Summary> {
    config.validate()?;
    if config.seeds.len() != 1 {
        return Err(Error::Config(
            "run_experiment takes a single-seed config; see RunConfig::for_seed".into(),
        ));
    }
    let started = Instant::now();
    let cfg = &config.alignment;
    let mut state = RunState::from_run_config(config)?;
    let mut writer = artifacts::RunWriter::create(dir, config, &state.params)?;
    let initial_success = success_rate(
        state.env.as_ref(),
        &state.policy,
        cfg.eval_episodes,
        evaluation_seed(cfg.seed),
    );
    let mut final_success = initial_success;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    for k in 1..=cfg.max_iterations {
        let out = run_iteration(&mut state, cfg, k)?;
        writer.record(&out, &state.params)?;
        iterations = k;
        final_success = out.report.success_rate;
        if final_success >= cfg.target_success {
            termination = Termination::TargetReached;
            break;
        }
    }
    let tokens: TokenUsage = state.oracle.tokens();
    let summary = Summary {
        env: config.env.clone(),
        label: config.label.clone(),
        seed: cfg.seed,
        iterations,
        termination,
        initial_success_rate: initial_success,
        final_success_rate: final_success,
        final_params: state
            .params
            .names()
            .iter()
            .cloned()
            .zip(state.params.values().iter().copied())
            .collect(),
        prompt_tokens: tokens.prompt,
        completion_tokens: tokens.completion,
        n_tokens: tokens.total(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        error: None,
    };
    writer.finish(&summary)?;
    Ok(summary)
}

/// Run every seed of `config` into sibling `seed-{s}` directories.
///
/// Configuration errors abort before any seed starts. A seed that fails at
/// run time gets a failed summary and the remaining seeds still run.
pub fn run_all(config: &RunConfig) -> Result<Vec<Summary>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.seeds.len());
    for &s in &config.seeds {
        let cfg = config.for_seed(s);
        let dir = config.seed_dir(s);
        match run_experiment(&cfg, &dir) {
            Ok(summary) => out.push(summary),
            Err(e) => {
                warn!(seed = s, "run failed: {e}");
                out.push(artifacts::write_failure(&dir, &cfg, &e)?);
            }
        }
    }
    Ok(out)
}
