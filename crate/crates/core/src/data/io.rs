//! Binary formats.
//!
//! Tensor block (`MMT1`):
//!
//! ```text
//! offset  size  content
//! 0       4     b"MMT1"
//! 4       4     header length N, u32 little-endian
//! 8       N     UTF-8 JSON {"shape":[..],"dtype":"f32","modality":"video","byte_order":"little"}
//! 8+N     4*P   P = product(shape) f32 values, little-endian, row-major
//! ```
//!
//! Pair file (`MMP1`): the magic, a u32 little-endian header length, a JSON
//! header `{"version":1,"cond_label":0|null,"samples_per_frame":160}`, then
//! the audio tensor block followed by the video tensor block.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PairedSample;
use crate::error::{Error, Result};
use crate::tensor::{Modality, ModalityTensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"MMT1";
pub const PAIR_MAGIC: &[u8; 4] = b"MMP1";

const MAX_HEADER: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub modality: Modality,
    pub byte_order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairHeader {
    version: u32,
    cond_label: Option<u32>,
    samples_per_frame: usize,
}

fn write_block<W: Write>(w: &mut W, magic: &[u8; 4], header: &[u8]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header)?;
    Ok(())
}

fn read_block_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Vec<u8>> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Data(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_HEADER {
        return Err(Error::Data(format!("header length {len} is implausible")));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    Ok(header)
}

pub fn write_tensor_to<W: Write>(w: &mut W, t: &ModalityTensor) -> Result<()> {
    let header = TensorHeader {
        shape: t.shape().to_vec(),
        dtype: "f32".into(),
        modality: t.modality(),
        byte_order: "little".into(),
    };
    write_block(w, TENSOR_MAGIC, &serde_json::to_vec(&header)?)?;
    let mut payload = Vec::with_capacity(4 * t.len());
    for v in t.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_tensor_from<R: Read>(r: &mut R) -> Result<ModalityTensor> {
    let header: TensorHeader = serde_json::from_slice(&read_block_header(r, TENSOR_MAGIC)?)?;
    if header.dtype != "f32" {
        return Err(Error::Data(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.byte_order != "little" {
        return Err(Error::Data(format!("unsupported byte order {:?}", header.byte_order)));
    }
    let n: usize = header.shape.iter().product();
    let mut payload = vec![0u8; 4 * n];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ModalityTensor::new(data, header.shape, header.modality)
}

pub fn write_tensor(path: &Path, t: &ModalityTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<ModalityTensor> {
    read_tensor_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_pair(path: &Path, pair: &PairedSample) -> Result<()> {
    let header = PairHeader {
        version: 1,
        cond_label: pair.cond_label,
        samples_per_frame: pair.samples_per_frame,
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_block(&mut w, PAIR_MAGIC, &serde_json::to_vec(&header)?)?;
    write_tensor_to(&mut w, &pair.audio)?;
    write_tensor_to(&mut w, &pair.video)?;
    w.flush()?;
    Ok(())
}

pub fn read_pair(path: &Path) -> Result<PairedSample> {
    let mut r = BufReader::new(File::open(path)?);
    let header: PairHeader = serde_json::from_slice(&read_block_header(&mut r, PAIR_MAGIC)?)?;
    if header.version != 1 {
        return Err(Error::Data(format!("unsupported pair version {}", header.version)));
    }
    let audio = read_tensor_from(&mut r)?;
    let video = read_tensor_from(&mut r)?;
    PairedSample::new(audio, video, header.cond_label, header.samples_per_frame)
}
