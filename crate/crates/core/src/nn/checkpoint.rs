//! Versioned checkpoint container: magic, JSON header, then little-endian
//! `f32` parameter blocks and optional optimizer accumulators.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NetworkConfig, Params};

const MAGIC: &[u8; 8] = b"VNAVCKPT";
const VERSION: u32 = 1;

/// Environment a checkpoint was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Sim,
    Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params<f32>,
    /// RMSprop squared-gradient averages, one per block.
    pub optimizer: Option<Vec<Vec<f32>>>,
    pub frame: u64,
    pub env_kind: EnvKind,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint network configuration does not match: stored {stored:?}, expected {expected:?}")]
    ConfigMismatch { stored: Box<NetworkConfig>, expected: Box<NetworkConfig> },
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: NetworkConfig,
    frame: u64,
    env_kind: EnvKind,
    blocks: Vec<BlockEntry>,
    has_optimizer: bool,
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let cfg = ckpt.params.config;
    let header = Header {
        version: VERSION,
        config: cfg,
        frame: ckpt.frame,
        env_kind: ckpt.env_kind,
        blocks: cfg
            .block_shapes()
            .iter()
            .zip(&ckpt.params.blocks)
            .map(|((b, _), v)| BlockEntry { name: b.name().to_string(), len: v.len() })
            .collect(),
        has_optimizer: ckpt.optimizer.is_some(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for b in &ckpt.params.blocks {
            write_f32s(&mut w, b)?;
        }
        if let Some(opt) = &ckpt.optimizer {
            for b in opt {
                write_f32s(&mut w, b)?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint; when `expected` is given, a different network
/// configuration is rejected.
pub fn load_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<Checkpoint, CheckpointError> {
    let mut r = io::BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut l = [0u8; 8];
    r.read_exact(&mut l)?;
    let mut json = vec![0u8; u64::from_le_bytes(l) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if let Some(exp) = expected {
        if *exp != header.config {
            return Err(CheckpointError::ConfigMismatch { stored: Box::new(header.config), expected: Box::new(*exp) });
        }
    }
    let shapes = header.config.block_shapes();
    if shapes.len() != header.blocks.len() {
        return Err(CheckpointError::Header("block count differs from configuration".into()));
    }
    let mut blocks = Vec::with_capacity(shapes.len());
    for ((b, shape), entry) in shapes.iter().zip(&header.blocks) {
        let len: usize = shape.iter().product();
        if entry.name != b.name() || entry.len != len {
            return Err(CheckpointError::Header(format!("block `{}` does not match `{}`", entry.name, b.name())));
        }
        blocks.push(read_f32s(&mut r, len)?);
    }
    let optimizer = if header.has_optimizer {
        let mut opt = Vec::with_capacity(blocks.len());
        for b in &blocks {
            opt.push(read_f32s(&mut r, b.len())?);
        }
        Some(opt)
    } else {
        None
    };
    Ok(Checkpoint {
        params: Params { config: header.config, blocks },
        optimizer,
        frame: header.frame,
        env_kind: header.env_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let params = Params::<f32>::init(NetworkConfig::tiny(), 1);
        let opt = params.blocks.iter().map(|b| vec![0.5; b.len()]).collect();
        let ck = Checkpoint { params, optimizer: Some(opt), frame: 1234, env_kind: EnvKind::Sim };
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path, Some(&NetworkConfig::tiny())).unwrap();
        assert_eq!(back, ck);
        let err = load_checkpoint(&path, Some(&NetworkConfig::desk())).unwrap_err();
        assert!(matches!(err, CheckpointError::ConfigMismatch { .. }));
        fs::write(&path, b"garbage!garbage").unwrap();
        assert!(matches!(load_checkpoint(&path, None), Err(CheckpointError::BadMagic)));
    }
}
