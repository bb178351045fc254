//! Evidence documents: a JSON object from decimal node ids to booleans,
//! e.g. `{"0": true, "7": false}`.

use serde_json::Value;
use thiserror::Error;
use umis_core::bn::Evidence;

#[derive(Debug, Error, PartialEq)]
pub enum EvidenceError {
    #[error("evidence must be a JSON object mapping node ids to booleans")]
    NotObject,
    #[error("evidence key {0:?} is not a node id")]
    BadKey(String),
    #[error("evidence for node {0} must be true or false")]
    BadValue(String),
    #[error("node {id} does not exist (the network has {n} nodes)")]
    UnknownNode { id: usize, n: usize },
    #[error("malformed evidence JSON: {0}")]
    Syntax(String),
}

pub fn parse_evidence(value: &Value, n: usize) -> Result<Evidence, EvidenceError> {
    let Value::Object(map) = value else {
        return Err(EvidenceError::NotObject);
    };
    let mut ev = Evidence::new();
    for (key, v) in map {
        // Reject signs, whitespace and leading zeros so each node has one spelling.
        let canonical = key.bytes().all(|b| b.is_ascii_digit()) && (key == "0" || !key.starts_with('0'));
        let id: usize = match key.parse() {
            Ok(id) if canonical => id,
            _ => return Err(EvidenceError::BadKey(key.clone())),
        };
        if id >= n {
            return Err(EvidenceError::UnknownNode { id, n });
        }
        let Value::Bool(b) = v else {
            return Err(EvidenceError::BadValue(key.clone()));
        };
        ev.insert(umis_core::bn::NodeId(id), *b);
    }
    Ok(ev)
}

pub fn parse_evidence_bytes(bytes: &[u8], n: usize) -> Result<Evidence, EvidenceError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| EvidenceError::Syntax(e.to_string()))?;
    parse_evidence(&value, n)
}
