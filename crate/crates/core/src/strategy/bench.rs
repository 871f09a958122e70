use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_strategy, Outcome, RunResult, StrategyConfig, StrategyError, StrategyKind};
use crate::graph::{plan_sequence, AssemblyGraph, ConnectionOperation};
use crate::seed::derive_seed;
use crate::sim::{init_trial, EdgePoses, InitOptions, OperationScene, Scenario};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub init: InitOptions,
    pub scenario: Scenario,
}

/// One trial of one strategy on one operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub task: String,
    pub operation: String,
    pub step: usize,
    pub strategy: StrategyKind,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub outcome: Outcome,
    pub steps_used: usize,
    pub rotation_error: f64,
    pub translation_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn trial_seed(base: u64, op: &ConnectionOperation, kind: StrategyKind, trial: usize) -> u64 {
    derive_seed(base, &[op.step as u64, kind.code(), trial as u64])
}

fn run_trial(scene: &OperationScene, cfg: &StrategyConfig, options: &BenchmarkOptions, seed: u64) -> RunResult {
    let mut world = init_trial(scene, &options.init, seed);
    run_strategy(&mut world, cfg, derive_seed(seed, &[1]))
}

fn report(task: &str, op: &ConnectionOperation, cfg: &StrategyConfig, trial: usize, seed: u64) -> TrialReport {
    TrialReport {
        task: task.to_owned(),
        operation: op.id.clone(),
        step: op.step,
        strategy: cfg.kind,
        trial,
        seed,
        success: false,
        outcome: Outcome::Error,
        steps_used: 0,
        rotation_error: f64::NAN,
        translation_error: f64::NAN,
        error: None,
    }
}

/// Runs `trials` trials of every strategy on every planned operation.
///
/// Trials run in parallel on the current rayon pool; the result order is
/// operation, strategy, trial regardless of scheduling. An operation whose
/// scene cannot be built yields `Error` reports and the batch continues.
pub fn run_benchmark(
    graph: &AssemblyGraph,
    poses: &EdgePoses,
    strategies: &[StrategyConfig],
    trials: usize,
    seed: u64,
    options: &BenchmarkOptions,
) -> Result<Vec<TrialReport>, StrategyError> {
    for cfg in strategies {
        cfg.check()?;
    }
    let ops = plan_sequence(graph)?;
    let scenes: Vec<_> = ops.iter().map(|op| OperationScene::build(graph, op, poses, &options.scenario)).collect();
    let jobs: Vec<_> = ops
        .iter()
        .zip(&scenes)
        .flat_map(|(op, scene)| strategies.iter().flat_map(move |cfg| (0..trials).map(move |t| (op, scene, cfg, t))))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(op, scene, cfg, trial)| {
            let seed = trial_seed(seed, op, cfg.kind, trial);
            let mut r = report(&graph.name, op, cfg, trial, seed);
            match scene {
                Ok(scene) => fill(&mut r, run_trial(scene, cfg, options, seed)),
                Err(e) => r.error = Some(e.to_string()),
            }
            r
        })
        .collect())
}

fn fill(r: &mut TrialReport, run: RunResult) {
    r.success = run.success;
    r.outcome = run.outcome;
    r.steps_used = run.steps_used;
    r.rotation_error = run.rotation_error;
    r.translation_error = run.translation_error;
}

/// Reruns the trial described by `previous` from its recorded seed.
pub fn replay_trial(
    graph: &AssemblyGraph,
    poses: &EdgePoses,
    previous: &TrialReport,
    cfg: &StrategyConfig,
    options: &BenchmarkOptions,
) -> Result<TrialReport, StrategyError> {
    let cfg = StrategyConfig { kind: previous.strategy, ..*cfg };
    cfg.check()?;
    let op = plan_sequence(graph)?
        .into_iter()
        .find(|o| o.id == previous.operation)
        .ok_or_else(|| StrategyError::InvalidConfig(format!("no operation `{}`", previous.operation)))?;
    let scene = OperationScene::build(graph, &op, poses, &options.scenario)?;
    let mut r = report(&graph.name, &op, &cfg, previous.trial, previous.seed);
    fill(&mut r, run_trial(&scene, &cfg, options, previous.seed));
    Ok(r)
}

/// One JSON object per line.
pub fn write_reports(reports: &[TrialReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

pub fn read_reports(text: &str) -> Result<Vec<TrialReport>, StrategyError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StrategyError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub strategy: StrategyKind,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub budget_exhausted: usize,
    pub errors: usize,
    /// Mean steps over successful trials.
    pub mean_steps: f64,
}

/// Success rates per task and strategy, tasks in first-seen order.
pub fn summarize(reports: &[TrialReport]) -> Vec<SummaryRow> {
    let mut tasks: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, StrategyKind), Vec<&TrialReport>> = BTreeMap::new();
    for r in reports {
        let t = match tasks.iter().position(|t| *t == r.task) {
            Some(i) => i,
            None => {
                tasks.push(&r.task);
                tasks.len() - 1
            }
        };
        groups.entry((t, r.strategy)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((t, strategy), rs)| {
            let successes: Vec<_> = rs.iter().filter(|r| r.success).collect();
            let mean_steps = if successes.is_empty() {
                f64::NAN
            } else {
                successes.iter().map(|r| r.steps_used as f64).sum::<f64>() / successes.len() as f64
            };
            SummaryRow {
                task: tasks[t].to_owned(),
                strategy,
                trials: rs.len(),
                successes: successes.len(),
                success_rate: successes.len() as f64 / rs.len() as f64,
                budget_exhausted: rs.iter().filter(|r| r.outcome == Outcome::BudgetExhausted).count(),
                errors: rs.iter().filter(|r| r.outcome == Outcome::Error).count(),
                mean_steps,
            }
        })
        .collect()
}

/// Task rows by strategy columns of success rates.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let strategies: Vec<StrategyKind> = StrategyKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.strategy == *k))
        .collect();
    let mut tasks: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    let width = tasks.iter().map(|t| t.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:width$}", "task");
    for k in &strategies {
        let _ = write!(out, "  {:>8}", k.name());
    }
    out.push('\n');
    for task in tasks {
        let _ = write!(out, "{task:width$}");
        for k in &strategies {
            match rows.iter().find(|r| r.task == task && r.strategy == *k) {
                Some(r) => {
                    let _ = write!(out, "  {:>8.3}", r.success_rate);
                }
                None => out.push_str("         -"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("task,strategy,trials,successes,success_rate,budget_exhausted,errors,mean_steps\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{:.3}",
            r.task, r.strategy, r.trials, r.successes, r.success_rate, r.budget_exhausted, r.errors, r.mean_steps
        );
    }
    out
}
