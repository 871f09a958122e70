//! Manual-step extraction datasets, predictions, and their scoring.

mod baseline;
mod score;

pub use baseline::{random_baseline, random_baseline_predictions};
pub use score::{score_dataset, score_step, score_steps, ExtractionScore, ScoreOptions};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{from_json_str, AttachmentPointId, ConnectorType, EdgeId, GraphIoError, NodeId};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("prediction is for step {predicted} but truth is step {truth}")]
    StepMismatch { predicted: usize, truth: usize },
    #[error("step {step}: not enough candidate points for a {connector_type} connection")]
    InsufficientCandidates { step: usize, connector_type: ConnectorType },
    #[error("step {step}: {message}")]
    InvalidStep { step: usize, message: String },
    #[error(transparent)]
    Format(#[from] GraphIoError),
}

/// Unordered attachment-point pair joined by one connector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointPair {
    pub points: [AttachmentPointId; 2],
    pub connector_type: ConnectorType,
}

impl PointPair {
    pub fn new(a: &str, b: &str, connector_type: ConnectorType) -> Self {
        Self {
            points: [AttachmentPointId::new(a), AttachmentPointId::new(b)],
            connector_type,
        }
    }

    /// Endpoints in sorted order, so (A, B) and (B, A) compare equal.
    pub fn sorted(&self) -> [&AttachmentPointId; 2] {
        let [a, b] = &self.points;
        if a <= b {
            [a, b]
        } else {
            [b, a]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepComponent {
    pub node: NodeId,
    /// Human-readable name shown to the model.
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub candidates: Vec<AttachmentPointId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionStep {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeId>,
    pub components: Vec<StepComponent>,
    pub connector_budget: BTreeMap<ConnectorType, usize>,
    pub truth_pairs: Vec<PointPair>,
    /// False models a blank manual page.
    pub manual_present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_image: Option<String>,
}

impl ExtractionStep {
    pub fn candidate_count(&self) -> usize {
        self.components.iter().map(|c| c.candidates.len()).sum()
    }

    pub fn budget_total(&self) -> usize {
        self.connector_budget.values().sum()
    }

    /// Index of the component listing `point`, if any.
    pub fn component_of(&self, point: &AttachmentPointId) -> Option<usize> {
        self.components.iter().position(|c| c.candidates.contains(point))
    }

    /// Checks that truth pairs use listed candidates from two different
    /// components and agree with the connector budget.
    pub fn check(&self) -> Result<(), ExtractionError> {
        let invalid = |message: String| ExtractionError::InvalidStep {
            step: self.step_index,
            message,
        };
        let mut counts: BTreeMap<ConnectorType, usize> = BTreeMap::new();
        for pair in &self.truth_pairs {
            let [a, b] = &pair.points;
            match (self.component_of(a), self.component_of(b)) {
                (Some(ca), Some(cb)) if ca != cb => {}
                (Some(_), Some(_)) => return Err(invalid(format!("pair {a}-{b} stays within one component"))),
                _ => return Err(invalid(format!("pair {a}-{b} uses a point outside the candidates"))),
            }
            *counts.entry(pair.connector_type).or_default() += 1;
        }
        let budget: BTreeMap<_, _> = self.connector_budget.iter().filter(|(_, n)| **n > 0).map(|(k, v)| (*k, *v)).collect();
        if counts != budget {
            return Err(invalid("truth pairs disagree with the connector budget".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionDataset {
    pub format_version: u32,
    pub task: String,
    pub steps: Vec<ExtractionStep>,
}

impl ExtractionDataset {
    pub fn step(&self, index: usize) -> Option<&ExtractionStep> {
        self.steps.iter().find(|s| s.step_index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepPrediction {
    pub step_index: usize,
    pub pairs: Vec<PointPair>,
    /// Diagnostics attached while producing the prediction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl StepPrediction {
    pub fn empty(step_index: usize) -> Self {
        Self {
            step_index,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub format_version: u32,
    pub task: String,
    pub predictions: Vec<StepPrediction>,
}

fn check_version(version: u32) -> Result<(), GraphIoError> {
    if version == DATASET_FORMAT_VERSION {
        Ok(())
    } else {
        Err(GraphIoError::Schema {
            field: "format_version".into(),
            message: format!("unsupported version {version}, expected {DATASET_FORMAT_VERSION}"),
        })
    }
}

pub fn load_dataset(text: &str) -> Result<ExtractionDataset, ExtractionError> {
    let dataset: ExtractionDataset = from_json_str(text)?;
    check_version(dataset.format_version)?;
    for step in &dataset.steps {
        step.check()?;
    }
    Ok(dataset)
}

pub fn load_predictions(text: &str) -> Result<PredictionsFile, ExtractionError> {
    let file: PredictionsFile = from_json_str(text)?;
    check_version(file.format_version)?;
    Ok(file)
}

/// Copy of `dataset` with the manual page of `count` uniformly chosen steps
/// blanked, for the incomplete-manual condition.
pub fn with_blank_manuals(dataset: &ExtractionDataset, count: usize, seed: u64) -> ExtractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    let n = out.steps.len();
    for i in rand::seq::index::sample(&mut rng, n, count.min(n)) {
        out.steps[i].manual_present = false;
        out.steps[i].manual_image = None;
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serializable");
    out.push('\n');
    out
}
