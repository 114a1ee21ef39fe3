//! Binary checkpoint container.
//!
//! ```text
//! magic "MDCKPT\0\0" | u32 version | u64 header length | JSON header
//! | f32 LE tensor data (parameters, then optimizer m, then optimizer v)
//! ```
//!
//! The header lists the model config, the run seed, the epoch, the
//! optimizer step and every tensor's name and shape in storage order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainError};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"MDCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    optimizer_step: Option<u64>,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.params.config,
            seed: self.seed,
            epoch: self.epoch,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            tensors: self
                .params
                .tensors()
                .iter()
                .map(|t| TensorInfo { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut sets = vec![&self.params];
        if let Some(o) = &self.optimizer {
            sets.extend([&o.m, &o.v]);
        }
        for set in sets {
            for t in set.tensors() {
                for x in &t.data {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, TrainError> {
        let bad = |reason: &str| TrainError::MalformedCheckpoint { path: origin.into(), reason: reason.into() };
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], TrainError> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(take(len)?).map_err(|e| bad(&e.to_string()))?;

        let mut params = ModelParams::<f32>::init(header.config, 0).map_err(|e| bad(&e.to_string()))?;
        let expected: Vec<TensorInfo> =
            params.tensors().iter().map(|t| TensorInfo { name: t.name.clone(), shape: t.shape.clone() }).collect();
        if expected != header.tensors {
            return Err(bad("tensor list does not match config"));
        }
        let mut fill = |set: &mut ModelParams<f32>| -> Result<(), TrainError> {
            for t in set.tensors_mut() {
                let raw = take(t.data.len() * 4)?;
                for (x, chunk) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
                    *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
            }
            Ok(())
        };
        fill(&mut params)?;
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let mut m = params.zeros_like();
                let mut v = params.zeros_like();
                fill(&mut m)?;
                fill(&mut v)?;
                Some(OptimizerState { m, v, step })
            }
            None => None,
        };
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { params, optimizer, seed: header.seed, epoch: header.epoch })
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let io_err = |source| TrainError::Io { path: path.display().to_string(), source };
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(&self.to_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes =
            std::fs::read(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
