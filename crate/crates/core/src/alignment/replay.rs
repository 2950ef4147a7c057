//! Offline checks over a finished run directory, and merging of several runs
//! into one plot-ready table.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::artifacts::{
    oracle_file, trajectory_file, MetricsRow, PolicyRecord, RankingRecord, StepRecord, Summary,
    CONFIG_FILE, METRICS_FILE, METRICS_HEADER, ORACLE_DIR, PARAMS_FILE, POLICIES_FILE,
    RANKINGS_FILE, SUMMARY_FILE, TRAJECTORY_DIR,
};
use super::config::RunConfig;
use super::evaluation_seed;
use crate::error::{Error, Result};
use crate::ranking::{discrepancy_count, rank_returns, Provenance, Ranking};
use crate::reward::{CompiledReward, FeatureRecord, Trajectory};
use crate::rl::success_rate;
use crate::TrajId;

pub const COMPARE_HEADER: [&str; 4] = ["condition", "seed", "iteration", "success_rate"];

const TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayReport {
    pub iterations: usize,
    /// Number of recomputed values compared against the logs.
    pub checks: usize,
    /// One entry per disagreement, naming the metrics row.
    pub problems: Vec<String>,
}

impl ReplayReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)
        .map_err(|e| Error::Artifact(format!("cannot open `{}`: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Artifact(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Artifact(format!(
            "{}: header is `{}`, expected `{}`",
            path.display(),
            got.iter().collect::<Vec<_>>().join(","),
            want.join(",")
        )));
    }
    Ok(())
}

fn missing_files(dir: &Path) -> Vec<String> {
    [
        CONFIG_FILE,
        METRICS_FILE,
        PARAMS_FILE,
        RANKINGS_FILE,
        POLICIES_FILE,
        SUMMARY_FILE,
        TRAJECTORY_DIR,
        ORACLE_DIR,
    ]
    .into_iter()
    .filter(|f| !dir.join(f).exists())
    .map(String::from)
    .collect()
}

fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(path, rdr.headers()?, &METRICS_HEADER)?;
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        rows.push(
            row.map_err(|e| Error::Artifact(format!("{} row {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

fn load_batch(path: &Path, order: &[u64]) -> Result<Vec<Trajectory>> {
    let steps: Vec<StepRecord> = read_jsonl(path)?;
    let mut grouped: BTreeMap<u64, (Vec<StepRecord>, bool)> = BTreeMap::new();
    for s in steps {
        let e = grouped
            .entry(s.trajectory)
            .or_insert((Vec::new(), s.success));
        e.0.push(s);
    }
    order
        .iter()
        .map(|id| {
            let (steps, success) = grouped.remove(id).ok_or_else(|| {
                Error::Artifact(format!("{}: trajectory {id} is missing", path.display()))
            })?;
            let mut states = Vec::with_capacity(steps.len());
            let mut actions = Vec::with_capacity(steps.len());
            let mut features: Vec<FeatureRecord> = Vec::with_capacity(steps.len());
            for (i, s) in steps.into_iter().enumerate() {
                if s.step != i {
                    return Err(Error::Artifact(format!(
                        "{}: trajectory {id} step {} out of order",
                        path.display(),
                        s.step
                    )));
                }
                let mut f = s.features;
                f.set_step(i);
                states.push(s.state);
                actions.push(s.action);
                features.push(f);
            }
            Trajectory::new(TrajId(*id), states, actions, features, success)
        })
        .collect()
}

/// Recompute every logged quantity of a run directory and compare it with
/// `metrics.csv`, `params.csv` and `rankings.jsonl`.
///
/// Missing files and malformed headers are errors; value disagreements are
/// collected in the report.
pub fn replay(dir: &Path) -> Result<ReplayReport> {
    let missing = missing_files(dir);
    if !missing.is_empty() {
        return Err(Error::Artifact(format!(
            "`{}` is missing: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let env = config.environment()?;
    let spec = config.reward_spec(env.as_ref())?;
    let reward = CompiledReward::new(&spec);
    let metrics = read_metrics(&dir.join(METRICS_FILE))?;

    let params_path = dir.join(PARAMS_FILE);
    let mut rdr = csv::Reader::from_path(&params_path)?;
    let want: Vec<&str> = std::iter::once("iteration")
        .chain(spec.params().names().iter().map(String::as_str))
        .collect();
    check_header(&params_path, rdr.headers()?, &want)?;
    let mut params_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || {
            Error::Artifact(format!(
                "{} row {}: malformed",
                params_path.display(),
                i + 1
            ))
        };
        let k: usize = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        params_rows.insert(k, vals);
    }

    let rankings: BTreeMap<usize, RankingRecord> =
        read_jsonl::<RankingRecord>(&dir.join(RANKINGS_FILE))?
            .into_iter()
            .map(|r| (r.iteration, r))
            .collect();
    let policies: BTreeMap<usize, PolicyRecord> =
        read_jsonl::<PolicyRecord>(&dir.join(POLICIES_FILE))?
            .into_iter()
            .map(|r| (r.iteration, r))
            .collect();
    let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?;

    let mut report = ReplayReport {
        iterations: metrics.len(),
        ..Default::default()
    };
    let eval_seed = evaluation_seed(config.alignment.seed);
    for (row_no, m) in metrics.iter().enumerate() {
        let k = m.iteration;
        let mut problem = |msg: String| {
            report.problems.push(format!(
                "metrics.csv row {} (iteration {k}): {msg}",
                row_no + 1
            ))
        };
        if k != row_no + 1 {
            problem(format!("expected iteration {}", row_no + 1));
            continue;
        }
        let (Some(before_p), Some(after_p)) = (params_rows.get(&(k - 1)), params_rows.get(&k))
        else {
            problem("params.csv lacks the surrounding rows".into());
            continue;
        };
        let changed = before_p != after_p;
        if changed != m.accepted {
            problem(format!(
                "accepted = {} but params changed = {changed}",
                m.accepted
            ));
        }
        if m.adjustment_fired && m.inconsistency_before != Some(0) {
            problem("adjustment fired on an inconsistent batch".into());
        }
        if let (true, Some(b), Some(a)) =
            (m.accepted, m.inconsistency_before, m.inconsistency_after)
        {
            if a > b {
                problem(format!("accepted update raised inconsistency {b} -> {a}"));
            }
        }
        if !oracle_file(dir, k).exists() {
            problem("oracle transcript is missing".into());
        }

        let Some(rec) = rankings.get(&k) else {
            problem("rankings.jsonl has no record".into());
            continue;
        };
        if rec.batch.len() != m.batch_size {
            problem(format!(
                "batch_size {} but {} ids logged",
                m.batch_size,
                rec.batch.len()
            ));
        }
        let batch = match load_batch(&trajectory_file(dir, k), &rec.batch) {
            Ok(b) => b,
            Err(e) => {
                problem(e.to_string());
                continue;
            }
        };
        let returns = |w: &[f64]| -> Result<Vec<f64>> {
            batch
                .iter()
                .map(|t| reward.trajectory_return(t, w))
                .collect()
        };
        let (r_before, r_after) = match (returns(before_p), returns(after_p)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                problem(format!("returns cannot be recomputed: {e}"));
                continue;
            }
        };
        report.checks += r_before.len();
        if r_before.len() != rec.returns_before.len()
            || r_before
                .iter()
                .zip(&rec.returns_before)
                .any(|(a, b)| (a - b).abs() > TOLERANCE)
        {
            problem("logged returns disagree with the recomputed ones".into());
        }

        match &rec.oracle {
            None => {
                if m.inconsistency_before.is_some() || m.inconsistency_after.is_some() {
                    problem("inconsistency logged without an oracle ranking".into());
                }
            }
            Some(order) => {
                let ids: Vec<TrajId> = batch.iter().map(Trajectory::id).collect();
                let oracle = Ranking::new(
                    order.iter().map(|&i| TrajId(i)).collect(),
                    Provenance::Oracle,
                )
                .and_then(|o| o.check_covers(&ids).map(|_| o));
                let oracle = match oracle {
                    Ok(o) => o,
                    Err(e) => {
                        problem(format!("oracle ranking: {e}"));
                        continue;
                    }
                };
                for (label, ret, logged) in [
                    ("inconsistency_before", &r_before, m.inconsistency_before),
                    ("inconsistency_after", &r_after, m.inconsistency_after),
                ] {
                    report.checks += 1;
                    let got =
                        discrepancy_count(&rank_returns(&ids, ret, Provenance::Reward), &oracle)?;
                    if logged != Some(got) {
                        problem(format!("{label} logged {logged:?}, recomputed {got}"));
                    }
                }
            }
        }

        match policies.get(&k) {
            None => problem("policies.jsonl has no record".into()),
            Some(p) => {
                report.checks += 1;
                let s = success_rate(
                    env.as_ref(),
                    &p.policy,
                    config.alignment.eval_episodes,
                    eval_seed,
                );
                if (s - m.success_rate).abs() > TOLERANCE {
                    problem(format!(
                        "success_rate logged {}, recomputed {s}",
                        m.success_rate
                    ));
                }
            }
        }
    }

    if summary.iterations != metrics.len() {
        report.problems.push(format!(
            "summary.json: iterations = {} but metrics.csv has {} rows",
            summary.iterations,
            metrics.len()
        ));
    }
    if let Some(last) = metrics.last() {
        if (summary.final_success_rate - last.success_rate).abs() > TOLERANCE {
            report.problems.push(format!(
                "summary.json: final_success_rate {} differs from the last row {}",
                summary.final_success_rate, last.success_rate
            ));
        }
    }
    if let Some(last) = params_rows.values().last() {
        let fin: Vec<f64> = spec
            .params()
            .names()
            .iter()
            .map(|n| summary.final_params.get(n).copied().unwrap_or(f64::NAN))
            .collect();
        if fin != *last {
            report
                .problems
                .push("summary.json: final_params differ from the last params.csv row".into());
        }
    }
    Ok(report)
}

/// Seed directories under `dir`: its `seed-*` children in seed order, or
/// the directory itself when it holds a run or has no such children.
pub fn seed_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(METRICS_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::Artifact(format!("cannot read `{}`: {e}", dir.display())))?;
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed-"))
            .and_then(|s| s.parse().ok());
        if let (Some(s), true) = (seed, path.join(METRICS_FILE).exists()) {
            found.push((s, path));
        }
    }
    if found.is_empty() {
        // treat it as a broken run so callers report the missing files
        return Ok(vec![dir.to_path_buf()]);
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Merge the success-rate curves of several runs into one CSV at `out`.
/// Returns the number of data rows written.
pub fn compare(dirs: &[PathBuf], out: &Path) -> Result<usize> {
    if dirs.len() < 2 {
        return Err(Error::Config(format!(
            "compare needs at least 2 run directories, got {}",
            dirs.len()
        )));
    }
    let mut rows: Vec<(String, u64, usize, f64)> = Vec::new();
    for dir in dirs {
        for run in seed_dirs(dir)? {
            let config = RunConfig::load(&run.join(CONFIG_FILE))?;
            let metrics = read_metrics(&run.join(METRICS_FILE))?;
            let seed = config.alignment.seed;
            rows.extend(
                metrics
                    .into_iter()
                    .map(|m| (config.label.clone(), seed, m.iteration, m.success_rate)),
            );
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(COMPARE_HEADER)?;
    for (condition, seed, iteration, success) in &rows {
        w.write_record([
            condition.clone(),
            seed.to_string(),
            iteration.to_string(),
            success.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows.len())
}
