//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ESADRNN\0"
//! version    u32
//! config     u32 length + UTF-8 `key = value` text
//! seed       u64
//! arrays     u32 count, then per array:
//!              u32 name length + name, u32 rank, rank x u64 dims,
//!              prod(dims) x f64
//! loss trace u64 count + count x f64
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Shape;
use crate::config::{ConfigError, TrainConfig};
use crate::model::ModelParams;
use crate::network::NetworkError;

pub const MAGIC: &[u8; 8] = b"ESADRNN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("array `{name}` has shape {found}, configuration implies {expected}")]
    Shape { name: String, expected: Shape, found: Shape },
    #[error("array `{0}` missing from checkpoint")]
    MissingArray(String),
    #[error("unexpected array `{0}` in checkpoint")]
    UnknownArray(String),
    #[error("{0} trailing bytes after checkpoint")]
    TrailingBytes(usize),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("stored configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let text = self.config.to_text();
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        put_u64(&mut out, self.seed);
        let arrays = self.params.arrays();
        put_u32(&mut out, arrays.len() as u32);
        for (name, shape, data) in arrays {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, shape.dims().len() as u32);
            for d in shape.dims() {
                put_u64(&mut out, *d as u64);
            }
            put_f64s(&mut out, data);
        }
        put_u64(&mut out, self.loss_trace.len() as u64);
        put_f64s(&mut out, &self.loss_trace);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic bytes")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = r.u32("configuration length")? as usize;
        let text = std::str::from_utf8(r.take(len, "configuration")?)
            .map_err(|e| CheckpointError::Corrupt(format!("configuration is not UTF-8: {e}")))?;
        let config = TrainConfig::from_text(text)?;
        let seed = r.u64("seed")?;

        let mut params = ModelParams::zeros(config.net, config.alpha_logit_init, config.beta_logit_init)?;
        let expected: Vec<(String, Shape)> = params.arrays().into_iter().map(|(n, s, _)| (n, s)).collect();
        let mut filled = vec![false; expected.len()];
        let count = r.u32("array count")? as usize;
        {
            let mut slots = params.arrays_mut();
            for _ in 0..count {
                let name_len = r.u32("array name length")? as usize;
                let name = String::from_utf8(r.take(name_len, "array name")?.to_vec())
                    .map_err(|_| CheckpointError::Corrupt("array name is not UTF-8".into()))?;
                let rank = r.u32("array rank")? as usize;
                if rank > 2 {
                    return Err(CheckpointError::Corrupt(format!("array `{name}` has rank {rank}")));
                }
                let dims = (0..rank)
                    .map(|_| r.u64("array dims").map(|d| d as usize))
                    .collect::<Result<Vec<_>, _>>()?;
                let found = Shape::new(dims);
                let idx = expected
                    .iter()
                    .position(|(n, _)| *n == name)
                    .ok_or_else(|| CheckpointError::UnknownArray(name.clone()))?;
                if expected[idx].1 != found {
                    return Err(CheckpointError::Shape {
                        name,
                        expected: expected[idx].1.clone(),
                        found,
                    });
                }
                *slots[idx] = r.f64s(found.numel(), "array data")?;
                filled[idx] = true;
            }
        }
        if let Some(i) = filled.iter().position(|f| !f) {
            return Err(CheckpointError::MissingArray(expected[i].0.clone()));
        }
        let n = r.u64("loss trace length")? as usize;
        let loss_trace = r.f64s(n, "loss trace")?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint {
            config,
            seed,
            params,
            loss_trace,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(what))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, cp.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
