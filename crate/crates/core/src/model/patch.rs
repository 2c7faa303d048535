//! Key-path patching of structured deployment descriptors.
//!
//! Paths are dot separated. A segment indexes an array when the node it
//! addresses is an array, otherwise it names an object key; keys that
//! contain dots can be written in double quotes (`metadata."app.kubernetes.io/name"`).
//! Missing object keys are created on the way down.

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use super::types::Patch;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("patch path `{path}` is not addressable: {reason}")]
    NotAddressable { path: String, reason: String },
    #[error("malformed patch path `{0}`")]
    Malformed(String),
}

/// Returns a copy of `descriptor` with every patch applied in order.
pub fn patch_descriptor(descriptor: &Value, patches: &[Patch]) -> Result<Value, PatchError> {
    let mut doc = descriptor.clone();
    for p in patches {
        apply_one(&mut doc, p)?;
    }
    Ok(doc)
}

fn apply_one(doc: &mut Value, patch: &Patch) -> Result<(), PatchError> {
    let segments = split_path(&patch.path)?;
    let not_addressable = |reason: String| PatchError::NotAddressable {
        path: patch.path.clone(),
        reason,
    };
    let mut node = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), patch.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    not_addressable(format!("segment `{seg}` indexes an array but is not a number"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    not_addressable(format!("index {idx} out of range for array of length {len}"))
                })?;
                if last {
                    *slot = patch.value.clone();
                    return Ok(());
                }
                slot
            }
            other => {
                return Err(not_addressable(format!(
                    "segment `{seg}` descends into a {} value",
                    kind_name(other)
                )))
            }
        };
    }
    // Empty path replaces the whole document.
    *node = patch.value.clone();
    Ok(())
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn split_path(path: &str) -> Result<Vec<String>, PatchError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut just_closed = false;
    for c in path.chars() {
        match c {
            '"' if quoted => {
                quoted = false;
                just_closed = true;
            }
            '"' if cur.is_empty() && !just_closed => quoted = true,
            '.' if !quoted => {
                if cur.is_empty() && !just_closed {
                    return Err(PatchError::Malformed(path.to_string()));
                }
                out.push(std::mem::take(&mut cur));
                just_closed = false;
            }
            _ if just_closed => return Err(PatchError::Malformed(path.to_string())),
            _ => cur.push(c),
        }
    }
    if quoted {
        return Err(PatchError::Malformed(path.to_string()));
    }
    if !cur.is_empty() || just_closed {
        out.push(cur);
    } else if !path.is_empty() {
        return Err(PatchError::Malformed(path.to_string()));
    }
    Ok(out)
}

/// Serialization format of a descriptor file, chosen by extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DocFormat {
    Json,
    Toml,
    Yaml,
}

impl DocFormat {
    pub fn from_path(path: &Path) -> DocFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => DocFormat::Toml,
            Some("yaml") | Some("yml") => DocFormat::Yaml,
            _ => DocFormat::Json,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DocFormat::Json => "json",
            DocFormat::Toml => "toml",
            DocFormat::Yaml => "yaml",
        }
    }

    pub fn parse(self, text: &str) -> Result<Value, String> {
        match self {
            DocFormat::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
            DocFormat::Toml => toml::from_str::<Value>(text).map_err(|e| e.to_string()),
            DocFormat::Yaml => serde_yaml::from_str(text).map_err(|e| e.to_string()),
        }
    }

    pub fn render(self, doc: &Value) -> Result<String, String> {
        match self {
            DocFormat::Json => serde_json::to_string_pretty(doc)
                .map(|s| s + "\n")
                .map_err(|e| e.to_string()),
            DocFormat::Toml => toml::to_string(doc).map_err(|e| e.to_string()),
            DocFormat::Yaml => serde_yaml::to_string(doc).map_err(|e| e.to_string()),
        }
    }
}
