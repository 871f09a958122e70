use thiserror::Error;

use super::types::{AssemblyGraph, FORMAT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphIoError {
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },
}

/// Parses the JSON graph format. Syntax problems and missing or mistyped
/// fields are [`GraphIoError::Parse`]; unknown enumeration values (such as a
/// connector type) and unsupported format versions are [`GraphIoError::Schema`].
pub fn load_graph(bytes: &[u8]) -> Result<AssemblyGraph, GraphIoError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GraphIoError::Parse {
        line: 0,
        column: 0,
        field: String::new(),
        message: format!("invalid UTF-8: {e}"),
    })?;
    let graph: AssemblyGraph = from_json_str(text)?;
    if graph.format_version != FORMAT_VERSION {
        return Err(GraphIoError::Schema {
            field: "format_version".into(),
            message: format!("unsupported version {}, expected {FORMAT_VERSION}", graph.format_version),
        });
    }
    Ok(graph)
}

pub fn save_graph(graph: &AssemblyGraph) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(graph).expect("graph serializes");
    out.push(b'\n');
    out
}

/// Deserializes with field-path tracking and splits syntax errors from schema
/// errors. Shared by the other JSON formats of the crate.
pub(crate) fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, GraphIoError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let field = err.path().to_string();
        classify(field, err.into_inner())
    })?;
    de.end().map_err(|e| classify(String::new(), e))?;
    Ok(value)
}

fn classify(field: String, inner: serde_json::Error) -> GraphIoError {
    let message = strip_position(&inner.to_string());
    if inner.is_data() && message.contains("unknown variant") {
        GraphIoError::Schema { field, message }
    } else {
        GraphIoError::Parse {
            line: inner.line(),
            column: inner.column(),
            field,
            message,
        }
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_owned(),
        None => message.to_owned(),
    }
}
