use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExtractionDataset, ExtractionError, ExtractionStep, PointPair, StepPrediction};
use crate::graph::{AttachmentPointId, ConnectorType};
use crate::seed::derive_seed;

/// Random-sampling baseline. Connectors are drawn in type order
/// (mortise-tenon, dowel, screw); each picks two distinct components that
/// still have unused candidates, uniformly, then one unused point on each.
pub fn random_baseline(step: &ExtractionStep, seed: u64) -> Result<StepPrediction, ExtractionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: BTreeSet<&AttachmentPointId> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(step.budget_total());
    for kind in ConnectorType::ALL {
        let count = step.connector_budget.get(&kind).copied().unwrap_or(0);
        for _ in 0..count {
            let free: Vec<Vec<&AttachmentPointId>> = step
                .components
                .iter()
                .map(|c| c.candidates.iter().filter(|p| !used.contains(p)).collect())
                .collect();
            let eligible: Vec<usize> = (0..free.len()).filter(|&i| !free[i].is_empty()).collect();
            if eligible.len() < 2 {
                return Err(ExtractionError::InsufficientCandidates {
                    step: step.step_index,
                    connector_type: kind,
                });
            }
            let i = rng.random_range(0..eligible.len());
            let mut j = rng.random_range(0..eligible.len() - 1);
            if j >= i {
                j += 1;
            }
            let (ci, cj) = (eligible[i].min(eligible[j]), eligible[i].max(eligible[j]));
            let a = free[ci][rng.random_range(0..free[ci].len())];
            let b = free[cj][rng.random_range(0..free[cj].len())];
            used.insert(a);
            used.insert(b);
            pairs.push(PointPair {
                points: [a.clone(), b.clone()],
                connector_type: kind,
            });
        }
    }
    Ok(StepPrediction {
        step_index: step.step_index,
        pairs,
        flags: vec![],
    })
}

/// One baseline prediction per step; the step seed is derived from `seed`
/// and the step index.
pub fn random_baseline_predictions(dataset: &ExtractionDataset, seed: u64) -> Result<Vec<StepPrediction>, ExtractionError> {
    dataset
        .steps
        .iter()
        .map(|s| random_baseline(s, derive_seed(seed, &[s.step_index as u64])))
        .collect()
}
