use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::IterationOutcome;
use crate::error::{Error, Result};
use crate::reward::{FeatureRecord, ParamVector};
use crate::rl::Policy;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PARAMS_FILE: &str = "params.csv";
pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const POLICIES_FILE: &str = "policies.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const ORACLE_DIR: &str = "oracle";

pub const METRICS_HEADER: [&str; 11] = [
    "iteration",
    "inconsistency_before",
    "inconsistency_after",
    "success_rate",
    "accepted",
    "adjustment_fired",
    "branch",
    "directions",
    "radius",
    "batch_size",
    "error",
];

/// One line of `metrics.csv`. Empty cells mean "not measured".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub inconsistency_before: Option<usize>,
    pub inconsistency_after: Option<usize>,
    pub success_rate: f64,
    pub accepted: bool,
    pub adjustment_fired: bool,
    pub branch: String,
    pub directions: String,
    pub radius: Option<f64>,
    pub batch_size: usize,
    pub error: String,
}

/// One line of `rankings.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub iteration: usize,
    /// Batch ids in presentation order.
    pub batch: Vec<u64>,
    /// Oracle ranking, best first; absent when the oracle failed.
    pub oracle: Option<Vec<u64>>,
    /// Returns of the batch under the parameters in force at ranking time.
    pub returns_before: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub iteration: usize,
    pub policy: Policy,
}

/// One line of `trajectories/NNN.jsonl`: a single step of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub trajectory: u64,
    pub step: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub features: FeatureRecord,
    pub success: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    TargetReached,
    MaxIterations,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub label: String,
    pub seed: u64,
    pub iterations: usize,
    pub termination: Termination,
    /// Success rate of the untrained policy on the evaluation block.
    pub initial_success_rate: f64,
    pub final_success_rate: f64,
    pub final_params: BTreeMap<String, f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub n_tokens: u64,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Record a seed that stopped with an error, keeping whatever was logged.
pub fn write_failure(dir: &Path, config: &RunConfig, error: &Error) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let summary = Summary {
        env: config.env.clone(),
        label: config.label.clone(),
        seed: config.alignment.seed,
        iterations: 0,
        termination: Termination::Failed,
        initial_success_rate: 0.0,
        final_success_rate: 0.0,
        final_params: BTreeMap::new(),
        prompt_tokens: 0,
        completion_tokens: 0,
        n_tokens: 0,
        wall_time_secs: 0.0,
        error: Some(error.to_string()),
    };
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

pub fn trajectory_file(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(TRAJECTORY_DIR)
        .join(format!("{iteration:03}.jsonl"))
}

pub fn oracle_file(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(ORACLE_DIR).join(format!("{iteration:03}.txt"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Artifact(format!("cannot create `{}`: {e}", path.display())))
}

fn param_row(iteration: usize, params: &ParamVector) -> Vec<String> {
    std::iter::once(iteration.to_string())
        .chain(params.values().iter().map(|v| v.to_string()))
        .collect()
}

/// Appends one iteration at a time and flushes after each, so an interrupted
/// run leaves a readable prefix.
pub(crate) struct RunWriter {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    params: csv::Writer<File>,
    rankings: BufWriter<File>,
    policies: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, config: &RunConfig, initial: &ParamVector) -> Result<Self> {
        for sub in [TRAJECTORY_DIR, ORACLE_DIR] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| {
                Error::Artifact(format!("cannot create `{}`: {e}", dir.join(sub).display()))
            })?;
        }
        fs::write(dir.join(CONFIG_FILE), config.to_toml_string()?)?;

        let mut metrics = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join(METRICS_FILE))?;
        metrics.write_record(METRICS_HEADER)?;
        metrics.flush()?;

        let mut params = csv::Writer::from_path(dir.join(PARAMS_FILE))?;
        let header: Vec<&str> = std::iter::once("iteration")
            .chain(initial.names().iter().map(String::as_str))
            .collect();
        params.write_record(&header)?;
        params.write_record(param_row(0, initial))?;
        params.flush()?;

        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            params,
            rankings: create(&dir.join(RANKINGS_FILE))?,
            policies: create(&dir.join(POLICIES_FILE))?,
        })
    }

    pub fn record(&mut self, out: &IterationOutcome, params_after: &ParamVector) -> Result<()> {
        let r = &out.report;
        let k = r.iteration;
        self.metrics.serialize(MetricsRow {
            iteration: k,
            inconsistency_before: r.inconsistency_before,
            inconsistency_after: r.inconsistency_after,
            success_rate: r.success_rate,
            accepted: r.accepted,
            adjustment_fired: r.adjustment_fired,
            branch: r.branch.as_str().to_string(),
            directions: r
                .directions
                .as_ref()
                .map(|d| d.summary())
                .unwrap_or_default(),
            radius: r.radius,
            batch_size: r.batch_size,
            error: r.error.clone().unwrap_or_default(),
        })?;
        self.metrics.flush()?;
        self.params.write_record(param_row(k, params_after))?;
        self.params.flush()?;

        let record = RankingRecord {
            iteration: k,
            batch: out.batch.iter().map(|t| t.id().0).collect(),
            oracle: out
                .oracle_ranking
                .as_ref()
                .map(|o| o.ids().iter().map(|id| id.0).collect()),
            returns_before: out.returns_before.clone(),
        };
        serde_json::to_writer(&mut self.rankings, &record)?;
        self.rankings.write_all(b"\n")?;
        self.rankings.flush()?;

        serde_json::to_writer(
            &mut self.policies,
            &PolicyRecord {
                iteration: k,
                policy: out.policy.clone(),
            },
        )?;
        self.policies.write_all(b"\n")?;
        self.policies.flush()?;

        let mut traj = create(&trajectory_file(&self.dir, k))?;
        for t in &out.batch {
            for (i, f) in t.features().iter().enumerate() {
                let step = StepRecord {
                    trajectory: t.id().0,
                    step: i,
                    state: t.states()[i].clone(),
                    action: t.actions()[i].clone(),
                    features: f.clone(),
                    success: t.success(),
                };
                serde_json::to_writer(&mut traj, &step)?;
                traj.write_all(b"\n")?;
            }
        }
        traj.flush()?;
        fs::write(oracle_file(&self.dir, k), &out.transcript)?;
        Ok(())
    }

    pub fn finish(self, summary: &Summary) -> Result<()> {
        let text = serde_json::to_string_pretty(summary)?;
        fs::write(self.dir.join(SUMMARY_FILE), text + "\n")?;
        Ok(())
    }
}
