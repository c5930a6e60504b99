//! Model checkpoints: `b"KDCK"`, a little-endian `u32` header length, a
//! JSON header, then every parameter as a little-endian `f64` in
//! [`Mlp::params`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::{Activation, Mlp};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KDCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub role: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub param_count: usize,
    #[serde(default)]
    pub seed_lineage: Vec<SeedRecord>,
}

pub fn encode_checkpoint(model: &Mlp, seed_lineage: &[SeedRecord]) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        layer_sizes: model.sizes().to_vec(),
        activation: model.activation(),
        param_count: model.param_count(),
        seed_lineage: seed_lineage.to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * header.param_count);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Mlp, CheckpointHeader)> {
    if bytes.len() < 8 {
        return Err(Error::Malformed("checkpoint shorter than its preamble".into()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + len).ok_or_else(|| Error::Malformed("truncated checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let blob = &bytes[8 + len..];
    if blob.len() != header.param_count * 8 {
        return Err(Error::ShapeMismatch(format!("{} parameter bytes for {} parameters", blob.len(), header.param_count)));
    }
    let params: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let model = Mlp::from_params(&header.layer_sizes, header.activation, &params)?;
    Ok((model, header))
}

pub fn save_checkpoint(path: &Path, model: &Mlp, seed_lineage: &[SeedRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_checkpoint(model, seed_lineage)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Mlp, CheckpointHeader)> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
