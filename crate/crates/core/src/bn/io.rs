//! JSON network files.
//!
//! ```json
//! { "name": "net", "nodes": [ { "id": 0, "name": "A", "parents": [], "cpt": [0.3] } ] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BayesNet, BnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub name: String,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub name: String,
    pub parents: Vec<usize>,
    pub cpt: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid network:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Network(BnError),
}

impl BayesNet {
    /// Parses and validates a network; invariant violations are reported with
    /// the line on which the offending node's object starts.
    pub fn from_json_str(text: &str, type_cap: usize) -> Result<Self, LoadError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        match BayesNet::from_file(&file, type_cap) {
            Ok(net) => Ok(net),
            Err(BnError::Invalid(report)) => {
                let lines = node_object_lines(text);
                let messages = report
                    .violations
                    .iter()
                    .map(|v| match v.node {
                        Some(pos) => {
                            let line = lines.get(pos).copied().unwrap_or(1);
                            format!(
                                "line {line}: node {} ({:?}): {}",
                                file.nodes[pos].id, file.nodes[pos].name, v.kind
                            )
                        }
                        None => format!("line 1: {}", v.kind),
                    })
                    .collect();
                Err(LoadError::Invalid(messages))
            }
            Err(e) => Err(LoadError::Network(e)),
        }
    }

    pub fn load(path: impl AsRef<Path>, type_cap: usize) -> Result<Self, LoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, type_cap)
    }

    /// Pretty-printed JSON; identical networks always serialize to identical bytes.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("network serializes");
        s.push('\n');
        s
    }
}

/// 1-based line numbers of the objects nested directly inside the top-level
/// object's arrays, i.e. the node records.
fn node_object_lines(text: &str) -> Vec<usize> {
    let mut lines = Vec::new();
    let mut line = 1;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for c in text.chars() {
        if c == '\n' {
            line += 1;
        }
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => {
                if c == '{' && depth == 2 {
                    lines.push(line);
                }
                depth += 1;
            }
            '}' | ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    lines
}
