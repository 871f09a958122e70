use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{Concurrency, ModelClient};
use super::parse::{parse_stage1, parse_stage2, ParseMode};
use super::prompt::{build_stage1_prompt, build_stage2_prompt, ConnectorGlossary};
use crate::extraction::{ExtractionDataset, ExtractionStep, PredictionsFile, StepPrediction, DATASET_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Steps processed concurrently; ignored for serial clients.
    pub parallelism: usize,
    pub mode: ParseMode,
    pub glossary: ConnectorGlossary,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            mode: ParseMode::Tolerant,
            glossary: ConnectorGlossary::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step_index: usize,
    pub stage: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub predictions: PredictionsFile,
    pub diagnostics: Vec<StepDiagnostic>,
    /// Steps taken over from an earlier partial run.
    pub resumed: usize,
}

fn run_step(
    step: &ExtractionStep,
    task: &str,
    client: &dyn ModelClient,
    opts: &PipelineOptions,
) -> Result<StepPrediction, StepDiagnostic> {
    let fail = |stage: u8| {
        move |e: &dyn std::fmt::Display| StepDiagnostic {
            step_index: step.step_index,
            stage,
            message: e.to_string(),
        }
    };
    let prompt1 = build_stage1_prompt(step, task, &opts.glossary).map_err(|e| fail(1)(&e))?;
    let raw1 = client.send(&prompt1).map_err(|e| fail(1)(&e))?;
    let stage1 = parse_stage1(&raw1, opts.mode).map_err(|e| fail(1)(&e))?;
    let prompt2 = build_stage2_prompt(step, task, &opts.glossary, &stage1).map_err(|e| fail(2)(&e))?;
    let raw2 = client.send(&prompt2).map_err(|e| fail(2)(&e))?;
    let mut pred = parse_stage2(&raw2, step, Some(&stage1), opts.mode).map_err(|e| fail(2)(&e))?;
    let mut flags = stage1.consistency_flags();
    flags.append(&mut pred.flags);
    pred.flags = flags;
    Ok(pred)
}

/// Runs both prompting stages over every step. A failing step becomes an
/// empty prediction carrying its diagnostic; the batch always completes.
pub fn run_pipeline(dataset: &ExtractionDataset, client: &dyn ModelClient, opts: &PipelineOptions) -> PipelineRun {
    resume_pipeline(dataset, client, opts, &[], &|_| {})
}

/// Like [`run_pipeline`], reusing `done` predictions for their steps and
/// reporting each newly finished step to `on_step` (for checkpointing).
pub fn resume_pipeline(
    dataset: &ExtractionDataset,
    client: &dyn ModelClient,
    opts: &PipelineOptions,
    done: &[StepPrediction],
    on_step: &(dyn Fn(&StepPrediction) + Sync),
) -> PipelineRun {
    let done: BTreeMap<usize, &StepPrediction> = done.iter().map(|p| (p.step_index, p)).collect();
    let todo: Vec<&ExtractionStep> = dataset.steps.iter().filter(|s| !done.contains_key(&s.step_index)).collect();
    let work = |step: &&ExtractionStep| {
        let result = run_step(step, &dataset.task, client, opts);
        let pred = match &result {
            Ok(p) => p.clone(),
            Err(d) => {
                log::warn!("step {} stage {}: {}", d.step_index, d.stage, d.message);
                StepPrediction {
                    flags: vec![format!("stage {} failed: {}", d.stage, d.message)],
                    ..StepPrediction::empty(step.step_index)
                }
            }
        };
        on_step(&pred);
        (pred, result.err())
    };
    let threads = if client.concurrency() == Concurrency::Serial { 1 } else { opts.parallelism.max(1) };
    let results: Vec<(StepPrediction, Option<StepDiagnostic>)> = if threads == 1 {
        todo.iter().map(work).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| todo.par_iter().map(work).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running serially");
                todo.iter().map(work).collect()
            }
        }
    };

    let mut fresh: BTreeMap<usize, StepPrediction> = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (pred, diag) in results {
        diagnostics.extend(diag);
        fresh.insert(pred.step_index, pred);
    }
    let predictions = dataset
        .steps
        .iter()
        .filter_map(|s| done.get(&s.step_index).map(|p| (*p).clone()).or_else(|| fresh.remove(&s.step_index)))
        .collect();
    PipelineRun {
        predictions: PredictionsFile {
            format_version: DATASET_FORMAT_VERSION,
            task: dataset.task.clone(),
            predictions,
        },
        diagnostics,
        resumed: done.len(),
    }
}
