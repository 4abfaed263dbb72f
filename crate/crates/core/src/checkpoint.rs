//! Model checkpoints.
//!
//! ```text
//! offset  size  content
//! 0       4     b"AVCK"
//! 4       4     header length N, u32 little-endian
//! 8       N     UTF-8 JSON header (see CheckpointHeader)
//! 8+N     8*P   P parameters, f64 little-endian, canonical order
//! ...     8*P   Adam first moments   (only when "optimizer" is present)
//! ...     8*P   Adam second moments  (only when "optimizer" is present)
//! ```
//!
//! Parameters are stored as f64 so that resuming reproduces the next step
//! bit for bit.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AnyModel, ModelSpec, Trainable};
use crate::netcore::{AdamConfig, AdamState};
use crate::train::{TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub param_count: usize,
    pub dtype: String,
    pub byte_order: String,
    pub optimizer: Option<OptimizerHeader>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub train: TrainConfig,
    pub optimizer: Option<(AdamConfig, AdamState)>,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * xs.len());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer<AnyModel>) -> Self {
        let adam = trainer.adam();
        Self {
            model: trainer.model.clone(),
            train: trainer.config.clone(),
            optimizer: Some((adam.config, adam.state.clone())),
        }
    }

    /// Completed optimizer steps, 0 without optimizer state.
    pub fn step(&self) -> usize {
        self.optimizer.as_ref().map_or(0, |(_, s)| s.step as usize)
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            model: self.model.spec(),
            train: self.train.clone(),
            param_count: self.model.param_count(),
            dtype: "f64".into(),
            byte_order: "little".into(),
            optimizer: self.optimizer.as_ref().map(|(c, s)| OptimizerHeader {
                config: *c,
                step: s.step,
            }),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        write_f64s(w, &self.model.params())?;
        if let Some((_, s)) = &self.optimizer {
            write_f64s(w, &s.m)?;
            write_f64s(w, &s.v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Data("not a checkpoint file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        if header.version != CHECKPOINT_VERSION || header.dtype != "f64" || header.byte_order != "little" {
            return Err(Error::Data(format!(
                "unsupported checkpoint (version {}, dtype {}, byte order {})",
                header.version, header.dtype, header.byte_order
            )));
        }
        let n = header.param_count;
        let params = read_f64s(r, n)?;
        let model = header.model.with_params(&params)?;
        let optimizer = match header.optimizer {
            Some(o) => {
                let m = read_f64s(r, n)?;
                let v = read_f64s(r, n)?;
                Some((o.config, AdamState { m, v, step: o.step }))
            }
            None => None,
        };
        Ok(Self {
            model,
            train: header.train,
            optimizer,
        })
    }

    /// Writes through a temporary file renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Trainer that continues this run, optionally with a new step budget.
    pub fn into_trainer(self, steps: Option<usize>) -> Result<Trainer<AnyModel>> {
        let mut train = self.train;
        if let Some(s) = steps {
            train.steps = s;
        }
        match self.optimizer {
            Some((cfg, state)) => Trainer::resume(self.model, train, cfg, state),
            None => Trainer::new(self.model, train),
        }
    }
}
