//! Network checkpoints.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "JSELNET1"
//! count        u32       number of tensors
//! shapes       count × (u32 rows, u32 cols)
//! data         Σ rows·cols × f64, row-major, in shape-table order
//! ```
//!
//! Tensors follow [`DualHeadNet::parameters`] order. A JSON sidecar
//! (`<stem>.json`) carries the shape, temperature, epoch, seed and the run
//! configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::net::{DualHeadNet, NetShape};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const MAGIC: &[u8; 8] = b"JSELNET1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub shape: NetShape,
    pub temperature: f64,
    pub epoch: usize,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode_parameters(params: &[&Matrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
    }
    for p in params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_parameters(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let bad = |msg: &str| Error::Parse {
        line: 0,
        message: format!("checkpoint: {msg}"),
    };
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(bad("truncated file"));
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4)?);
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u32_at(take(4)?);
        let cols = u32_at(take(4)?);
        shapes.push((rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let raw = take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(Matrix::new(rows, cols, data)?);
    }
    if !cursor.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

/// Writes `path` (binary parameters) and its `.json` sidecar.
pub fn save_checkpoint(net: &DualHeadNet, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_parameters(&net.parameters()))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::numeric(e.to_string()))?;
    fs::write(sidecar(path), json + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(DualHeadNet, CheckpointMeta)> {
    let meta_text = fs::read_to_string(sidecar(path))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let params = decode_parameters(&bytes)?;
    let net = DualHeadNet::zeros(meta.shape.clone(), meta.temperature)?.with_parameters(&params)?;
    Ok((net, meta))
}
