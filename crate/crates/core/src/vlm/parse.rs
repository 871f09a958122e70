use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::VlmError;
use crate::extraction::{ExtractionStep, PointPair, StepPrediction};
use crate::graph::{AttachmentPointId, ConnectorType};

/// Permissive parsing strips prose and code fences, repairs curly quotes and
/// trailing commas, and maps connector synonyms. Strict parsing accepts only
/// the bare JSON answer with canonical type names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Tolerant,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOneEntry {
    pub component: String,
    pub count: usize,
    pub connector_type: ConnectorType,
}

/// Connector counts per component as estimated in stage 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageOneOutput {
    pub entries: Vec<StageOneEntry>,
}

impl StageOneOutput {
    /// Points per type summed over components.
    pub fn point_totals(&self) -> BTreeMap<ConnectorType, usize> {
        let mut totals = BTreeMap::new();
        for e in &self.entries {
            *totals.entry(e.connector_type).or_default() += e.count;
        }
        totals
    }

    /// Connectors per type: each joins one point on each of two components.
    pub fn connector_totals(&self) -> BTreeMap<ConnectorType, usize> {
        self.point_totals().into_iter().map(|(k, n)| (k, n.div_ceil(2))).collect()
    }

    pub fn connector_count(&self) -> usize {
        self.connector_totals().values().sum()
    }

    /// Per-type point counts must split into cross-component pairs.
    pub fn consistency_flags(&self) -> Vec<String> {
        let mut flags = Vec::new();
        for (kind, total) in self.point_totals() {
            let max = self
                .entries
                .iter()
                .filter(|e| e.connector_type == kind)
                .map(|e| e.count)
                .max()
                .unwrap_or(0);
            if total % 2 == 1 || max > total - max {
                flags.push(format!("stage-1 {kind} counts cannot be paired across components"));
            }
        }
        flags
    }

    /// Map form used in prompts: `{"name": [n, "type"]}`, with a list of
    /// such pairs when a component has several types.
    pub fn to_json(&self) -> String {
        let mut map: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(&e.component)
                .or_default()
                .push(Value::from(vec![Value::from(e.count), Value::from(e.connector_type.as_str())]));
        }
        let obj: serde_json::Map<String, Value> = map
            .into_iter()
            .map(|(k, mut v)| (k.to_owned(), if v.len() == 1 { v.remove(0) } else { Value::from(v) }))
            .collect();
        Value::Object(obj).to_string()
    }
}

fn unparseable(message: impl Into<String>, span: impl Into<String>) -> VlmError {
    let mut span = span.into();
    if span.chars().count() > 120 {
        span = span.chars().take(120).collect::<String>() + "...";
    }
    VlmError::UnparseableResponse {
        message: message.into(),
        span,
    }
}

/// Maps free-text connector names onto types.
pub fn connector_type_from_text(text: &str, mode: ParseMode) -> Option<ConnectorType> {
    let norm = text.to_lowercase().replace(['-', '_'], " ");
    let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
    match mode {
        ParseMode::Strict => match norm.as_str() {
            "mortise tenon" => Some(ConnectorType::MortiseTenon),
            "dowel" => Some(ConnectorType::Dowel),
            "screw" => Some(ConnectorType::Screw),
            _ => None,
        },
        ParseMode::Tolerant => {
            let has = |words: &[&str]| words.iter().any(|w| norm.contains(w));
            if has(&["mortise", "tenon", "stud", "snap", "slot"]) {
                Some(ConnectorType::MortiseTenon)
            } else if has(&["dowel", "pin"]) {
                Some(ConnectorType::Dowel)
            } else if has(&["screw", "bolt", "cam lock"]) {
                Some(ConnectorType::Screw)
            } else {
                None
            }
        }
    }
}

fn normalize_quotes(raw: &str) -> String {
    raw.replace(['\u{201c}', '\u{201d}', '\u{201e}', '\u{2033}'], "\"")
        .replace(['\u{2018}', '\u{2019}'], "'")
}

static TRAILING_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r",\s*([}\]])").expect("valid regex"));

/// First balanced span opened by `open`, skipping string contents.
fn balanced_span(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, ch) in text[start..].char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

fn count_of(v: &Value) -> Option<usize> {
    let f = v.as_f64()?;
    (f >= 0.0 && f.fract() == 0.0).then_some(f as usize)
}

fn entry_pair(v: &Value, mode: ParseMode) -> Result<Option<(usize, ConnectorType)>, VlmError> {
    let (count, kind) = match v {
        Value::Array(items) if items.len() == 2 => match (&items[0], &items[1]) {
            (n, Value::String(t)) if n.is_number() => (n, t),
            (Value::String(t), n) if n.is_number() && mode == ParseMode::Tolerant => (n, t),
            _ => return Ok(None),
        },
        Value::Object(o) if mode == ParseMode::Tolerant => match (o.get("count"), o.get("type")) {
            (Some(n), Some(Value::String(t))) => (n, t),
            _ => return Ok(None),
        },
        _ => return Ok(None),
    };
    let count = count_of(count).ok_or_else(|| unparseable("connector count is not a non-negative integer", v.to_string()))?;
    let kind = connector_type_from_text(kind, mode)
        .ok_or_else(|| unparseable(format!("unknown connector type `{kind}`"), kind.clone()))?;
    Ok(Some((count, kind)))
}

pub fn parse_stage1(raw: &str, mode: ParseMode) -> Result<StageOneOutput, VlmError> {
    let value: Value = match mode {
        ParseMode::Strict => serde_json::from_str(raw.trim()).map_err(|e| unparseable(e.to_string(), raw.trim()))?,
        ParseMode::Tolerant => {
            let text = normalize_quotes(raw);
            let span = balanced_span(&text, '{', '}').ok_or_else(|| unparseable("no JSON object found", raw.trim()))?;
            let repaired = TRAILING_COMMA.replace_all(span, "$1");
            serde_json::from_str(&repaired).map_err(|e| unparseable(e.to_string(), span))?
        }
    };
    let Value::Object(map) = value else {
        return Err(unparseable("expected a JSON object", value.to_string()));
    };
    let mut entries = Vec::new();
    for (component, v) in map {
        let pairs = match entry_pair(&v, mode)? {
            Some(p) => vec![p],
            None => match &v {
                Value::Array(items) => items
                    .iter()
                    .map(|item| entry_pair(item, mode)?.ok_or_else(|| unparseable("expected [count, \"type\"]", item.to_string())))
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(unparseable(format!("bad entry for `{component}`"), v.to_string())),
            },
        };
        for (count, connector_type) in pairs {
            entries.push(StageOneEntry {
                component: component.clone(),
                count,
                connector_type,
            });
        }
    }
    Ok(StageOneOutput { entries })
}

static PAIR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"\[\s*["']?([A-Za-z0-9][A-Za-z0-9_.\-]*)["']?\s*,\s*["']?([A-Za-z0-9][A-Za-z0-9_.\-]*)["']?\s*(?:,\s*["']([^"'\]]*)["']\s*)?\]"#,
    )
    .expect("valid regex")
});

/// Parses attachment-point pairs. Pairs without an explicit type take it
/// from the stage-1 estimate, else from the step's connector budget, in
/// type order. Unknown ids are kept and flagged.
pub fn parse_stage2(
    raw: &str,
    step: &ExtractionStep,
    stage1: Option<&StageOneOutput>,
    mode: ParseMode,
) -> Result<StepPrediction, VlmError> {
    let mut flags = Vec::new();
    let raw_pairs: Vec<(String, String, Option<String>)> = match mode {
        ParseMode::Strict => {
            let lists: Vec<Vec<String>> =
                serde_json::from_str(raw.trim()).map_err(|e| unparseable(e.to_string(), raw.trim()))?;
            lists
                .into_iter()
                .map(|l| match l.as_slice() {
                    [a, b] => Ok((a.clone(), b.clone(), None)),
                    [a, b, t] => Ok((a.clone(), b.clone(), Some(t.clone()))),
                    _ => Err(unparseable("pairs need two ids and an optional type", format!("{l:?}"))),
                })
                .collect::<Result<_, _>>()?
        }
        ParseMode::Tolerant => {
            let text = normalize_quotes(raw);
            let found: Vec<_> = PAIR
                .captures_iter(&text)
                .map(|c| (c[1].to_owned(), c[2].to_owned(), c.get(3).map(|m| m.as_str().to_owned())))
                .collect();
            if found.is_empty() && !(text.contains('[') && text.contains(']')) {
                return Err(unparseable("no attachment-point pairs found", raw.trim()));
            }
            found
        }
    };

    let source = match stage1 {
        Some(s) if s.connector_count() > 0 => s.connector_totals(),
        _ => step.connector_budget.clone(),
    };
    let fallback: Vec<ConnectorType> = ConnectorType::ALL
        .into_iter()
        .flat_map(|k| std::iter::repeat_n(k, source.get(&k).copied().unwrap_or(0)))
        .collect();
    let mixed = source.values().filter(|n| **n > 0).count() > 1;

    let mut pairs = Vec::with_capacity(raw_pairs.len());
    let mut inferred_from_order = false;
    for (i, (a, b, kind)) in raw_pairs.into_iter().enumerate() {
        let explicit = kind.as_deref().and_then(|t| {
            let k = connector_type_from_text(t, mode);
            if k.is_none() {
                flags.push(format!("unknown connector type `{t}` for pair {a}-{b}"));
            }
            k
        });
        let connector_type = match explicit {
            Some(k) => k,
            None => {
                inferred_from_order |= mixed;
                fallback
                    .get(i)
                    .or(fallback.last())
                    .copied()
                    .unwrap_or(ConnectorType::MortiseTenon)
            }
        };
        let ids = [AttachmentPointId::new(a), AttachmentPointId::new(b)];
        for id in &ids {
            if step.component_of(id).is_none() {
                flags.push(format!("unknown attachment point {id}"));
            }
        }
        if let (Some(ca), Some(cb)) = (step.component_of(&ids[0]), step.component_of(&ids[1])) {
            if ca == cb {
                flags.push(format!("pair {}-{} stays within one component", ids[0], ids[1]));
            }
        }
        pairs.push(PointPair {
            points: ids,
            connector_type,
        });
    }
    if inferred_from_order {
        flags.push("connector types inferred from budget order".into());
    }
    if let Some(s) = stage1 {
        if pairs.len() > s.connector_count() {
            flags.push(format!(
                "consistency: {} pairs exceed the stage-1 estimate of {} connectors",
                pairs.len(),
                s.connector_count()
            ));
        }
    }
    Ok(StepPrediction {
        step_index: step.step_index,
        pairs,
        flags,
    })
}
