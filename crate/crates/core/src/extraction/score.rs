use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ExtractionDataset, ExtractionError, ExtractionStep, PointPair, StepPrediction};
use crate::graph::{AttachmentPointId, ConnectorType};

/// Scores in [0, 1]; multiply by 100 for table percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionScore {
    pub pair_f1: f64,
    pub pair_success: f64,
    pub set_f1: f64,
    pub set_success: f64,
}

impl ExtractionScore {
    pub fn percent(&self) -> Self {
        Self {
            pair_f1: self.pair_f1 * 100.0,
            pair_success: self.pair_success * 100.0,
            set_f1: self.set_f1 * 100.0,
            set_success: self.set_success * 100.0,
        }
    }

    pub fn mean(scores: &[ExtractionScore]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        let sum = |f: fn(&ExtractionScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
        Self {
            pair_f1: sum(|s| s.pair_f1),
            pair_success: sum(|s| s.pair_success),
            set_f1: sum(|s| s.set_f1),
            set_success: sum(|s| s.set_success),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// A predicted pair only counts when its connector type matches too.
    pub match_connector_type: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            match_connector_type: true,
        }
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn score_step(
    pred: &StepPrediction,
    truth: &ExtractionStep,
    opts: ScoreOptions,
) -> Result<ExtractionScore, ExtractionError> {
    if pred.step_index != truth.step_index {
        return Err(ExtractionError::StepMismatch {
            predicted: pred.step_index,
            truth: truth.step_index,
        });
    }
    let key = |p: &PointPair| -> ([AttachmentPointId; 2], Option<ConnectorType>) {
        let [a, b] = p.sorted();
        ([a.clone(), b.clone()], opts.match_connector_type.then_some(p.connector_type))
    };
    let mut unmatched: BTreeSet<_> = truth.truth_pairs.iter().map(key).collect();
    let (mut tp, mut fp) = (0, 0);
    for p in &pred.pairs {
        if unmatched.remove(&key(p)) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    let fn_ = unmatched.len();

    let points = |pairs: &[PointPair]| -> BTreeSet<AttachmentPointId> {
        pairs.iter().flat_map(|p| p.points.iter().cloned()).collect()
    };
    let (ps, ts) = (points(&pred.pairs), points(&truth.truth_pairs));
    let stp = ps.intersection(&ts).count();
    let (sfp, sfn) = (ps.len() - stp, ts.len() - stp);

    Ok(ExtractionScore {
        pair_f1: f1(tp, fp, fn_),
        pair_success: f64::from(u8::from(fp == 0 && fn_ == 0)),
        set_f1: f1(stp, sfp, sfn),
        set_success: f64::from(u8::from(sfp == 0 && sfn == 0)),
    })
}

/// Per-step scores in dataset order. A step without a prediction is scored
/// as an empty prediction.
pub fn score_steps(preds: &[StepPrediction], dataset: &ExtractionDataset, opts: ScoreOptions) -> Vec<ExtractionScore> {
    dataset
        .steps
        .iter()
        .map(|step| {
            let empty = StepPrediction::empty(step.step_index);
            let pred = preds.iter().find(|p| p.step_index == step.step_index).unwrap_or(&empty);
            score_step(pred, step, opts).expect("indices match by construction")
        })
        .collect()
}

/// Unweighted mean over steps.
pub fn score_dataset(preds: &[StepPrediction], dataset: &ExtractionDataset, opts: ScoreOptions) -> ExtractionScore {
    ExtractionScore::mean(&score_steps(preds, dataset, opts))
}
