use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::parse::StageOneOutput;
use super::VlmError;
use crate::extraction::ExtractionStep;
use crate::graph::ConnectorType;

pub const TEMPLATE_VERSION: &str = "v1";
const STAGE1_TEMPLATE: &str = include_str!("../../templates/stage1_v1.txt");
const STAGE2_TEMPLATE: &str = include_str!("../../templates/stage2_v1.txt");

/// Prompt text plus opaque image references, manual page first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template: String,
    pub text: String,
    pub images: Vec<String>,
}

/// Short description of each connector type shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorGlossary(pub BTreeMap<ConnectorType, String>);

impl Default for ConnectorGlossary {
    fn default() -> Self {
        Self(BTreeMap::from([
            (
                ConnectorType::MortiseTenon,
                "a protrusion on one component that slots into a cavity on the other; no separate piece".to_owned(),
            ),
            (ConnectorType::Dowel, "a separate cylindrical wooden pin pushed into holes on both components".to_owned()),
            (ConnectorType::Screw, "a separate threaded fastener driven through one component into the other".to_owned()),
        ]))
    }
}

impl ConnectorGlossary {
    fn render(&self) -> String {
        let mut out = String::new();
        for (kind, text) in &self.0 {
            let _ = writeln!(out, "- {}: {}", kind.as_str(), text);
        }
        out.trim_end().to_owned()
    }
}

fn fill(template: &str, values: &[(&str, String)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in values {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

/// Placeholders shared by both stages; also checks image references.
fn common(step: &ExtractionStep, task: &str, glossary: &ConnectorGlossary) -> Result<(Vec<(&'static str, String)>, Vec<String>), VlmError> {
    let missing = |what: String| VlmError::MissingAsset {
        step: step.step_index,
        what,
    };
    if step.components.len() < 2 {
        return Err(missing(format!("{} component(s), at least 2 required", step.components.len())));
    }
    let mut images = Vec::new();
    let manual_note = if step.manual_present {
        let manual = step.manual_image.clone().ok_or_else(|| missing("manual page image".into()))?;
        images.push(manual);
        "The first image is the manual page for this step.".to_owned()
    } else {
        "The manual page for this step is missing. Infer the connections from the component images and your prior knowledge of how such products are assembled.".to_owned()
    };
    let mut components = String::new();
    for (i, c) in step.components.iter().enumerate() {
        let image = c.image.clone().ok_or_else(|| missing(format!("image of component {}", c.node)))?;
        images.push(image);
        let _ = writeln!(components, "{}. {} ({} candidate points)", i + 1, c.label, c.candidates.len());
    }
    let mut legend = String::new();
    for c in &step.components {
        let ids: Vec<&str> = c.candidates.iter().map(|p| p.as_str()).collect();
        let _ = writeln!(legend, "- {}: {}", c.label, ids.join(", "));
    }
    let values = vec![
        ("candidate_count", step.candidate_count().to_string()),
        ("legend", legend.trim_end().to_owned()),
        ("task", task.to_owned()),
        ("step_index", step.step_index.to_string()),
        ("manual_note", manual_note),
        ("components", components.trim_end().to_owned()),
        ("glossary", glossary.render()),
    ];
    Ok((values, images))
}

pub fn build_stage1_prompt(step: &ExtractionStep, task: &str, glossary: &ConnectorGlossary) -> Result<PromptBundle, VlmError> {
    let (values, images) = common(step, task, glossary)?;
    Ok(PromptBundle {
        template: format!("stage1_{TEMPLATE_VERSION}"),
        text: fill(STAGE1_TEMPLATE, &values),
        images,
    })
}

/// Stage-2 prompt; the stage-1 estimate is forwarded verbatim.
pub fn build_stage2_prompt(
    step: &ExtractionStep,
    task: &str,
    glossary: &ConnectorGlossary,
    stage1: &StageOneOutput,
) -> Result<PromptBundle, VlmError> {
    let (mut values, images) = common(step, task, glossary)?;
    values.push(("stage1", stage1.to_json()));
    Ok(PromptBundle {
        template: format!("stage2_{TEMPLATE_VERSION}"),
        text: fill(STAGE2_TEMPLATE, &values),
        images,
    })
}
