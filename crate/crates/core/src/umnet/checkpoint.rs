//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field        | type                        |
//! |--------------|-----------------------------|
//! | magic        | `b"UMISCKPT"`               |
//! | version      | `u32`                       |
//! | header_len   | `u32`                       |
//! | header       | UTF-8 JSON: config + node types |
//! | steps        | `u64`                       |
//! | param_count  | `u64`                       |
//! | params       | `param_count` x `f64`, declaration order |
//! | checksum     | `u64` FNV-1a of every preceding byte |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Marginaliser, UmConfig, UmError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"UMISCKPT";

#[derive(Serialize, Deserialize)]
struct Header {
    config: UmConfig,
    node_types: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Marginaliser,
    /// Optimiser steps the weights were trained for.
    pub steps: u64,
}

impl Checkpoint {
    /// Fails with [`UmError::ConfigMismatch`] unless the stored configuration equals `expected`.
    pub fn expect_config(&self, expected: &UmConfig) -> Result<(), UmError> {
        let stored = self.model.config();
        if stored != expected {
            return Err(UmError::ConfigMismatch(format!(
                "stored {}, requested {}",
                serde_json::to_string(stored).unwrap_or_default(),
                serde_json::to_string(expected).unwrap_or_default()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.model.config().clone(),
            node_types: self.model.node_types().to_vec(),
        })
        .expect("header serializes");
        let flat = self.model.params.to_flat();
        let mut out = Vec::with_capacity(40 + header.len() + 8 * flat.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.steps.to_le_bytes());
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for x in flat {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, UmError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(UmError::Corrupt("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(UmError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| UmError::Corrupt(format!("header: {e}")))?;
        let steps = r.u64()?;
        let count = r.u64()? as usize;
        if count > (bytes.len() - r.pos) / 8 {
            return Err(UmError::Corrupt("truncated parameter block".into()));
        }
        let flat: Vec<f64> = (0..count)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<_, _>>()?;
        let body_end = r.pos;
        let sum = r.u64()?;
        if r.pos != bytes.len() {
            return Err(UmError::Corrupt("trailing bytes".into()));
        }
        if sum != fnv1a(&bytes[..body_end]) {
            return Err(UmError::Corrupt("checksum mismatch".into()));
        }
        let mut model = Marginaliser::init(&header.config, &header.node_types)
            .map_err(|e| UmError::Corrupt(e.to_string()))?;
        if model.params.len() != count {
            return Err(UmError::Corrupt(format!(
                "{count} parameters stored, configuration needs {}",
                model.params.len()
            )));
        }
        model.params.copy_from_flat(&flat);
        let model = Marginaliser::from_parts(header.config, header.node_types, model.params)?;
        Ok(Checkpoint { model, steps })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], UmError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| UmError::Corrupt("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, UmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, UmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn save_params(path: impl AsRef<Path>, model: &Marginaliser, steps: u64) -> Result<(), UmError> {
    let ckpt = Checkpoint {
        model: model.clone(),
        steps,
    };
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Checkpoint, UmError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
