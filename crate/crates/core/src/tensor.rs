//! Shaped `f32` arrays tagged with the modality they carry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Generic,
}

/// Row-major tensor. Video is `[F, C, H, W]`, audio is `[L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTensor {
    data: Vec<f32>,
    shape: Vec<usize>,
    modality: Modality,
}

impl ModalityTensor {
    pub fn new(data: Vec<f32>, shape: Vec<usize>, modality: Modality) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor data length", n, data.len()));
        }
        match modality {
            Modality::Video if shape.len() != 4 => {
                return Err(Error::dim("video rank", 4, shape.len()))
            }
            Modality::Audio if shape.len() != 1 => {
                return Err(Error::dim("audio rank", 1, shape.len()))
            }
            _ => {}
        }
        Ok(Self {
            data,
            shape,
            modality,
        })
    }

    pub fn zeros(shape: Vec<usize>, modality: Modality) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(vec![0.0; n], shape, modality)
    }

    pub fn audio(data: Vec<f32>) -> Self {
        let len = data.len();
        Self {
            data,
            shape: vec![len],
            modality: Modality::Audio,
        }
    }

    pub fn video(data: Vec<f32>, frames: usize, channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(data, vec![frames, channels, height, width], Modality::Video)
    }

    pub fn generic(data: Vec<f32>) -> Self {
        let len = data.len();
        Self {
            data,
            shape: vec![len],
            modality: Modality::Generic,
        }
    }

    /// Builds a tensor of the same shape and modality from `f64` values,
    /// rounding to `f32`.
    pub fn like_from_f64(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.data.len() {
            return Err(Error::dim("tensor data length", self.data.len(), values.len()));
        }
        Ok(Self {
            data: values.iter().map(|&v| v as f32).collect(),
            shape: self.shape.clone(),
            modality: self.modality,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of frames: `F` for video, unused for other modalities.
    pub fn frames(&self) -> usize {
        match self.modality {
            Modality::Video => self.shape[0],
            _ => self.data.len(),
        }
    }

    /// Pixels per frame (`C * H * W`) for video.
    pub fn frame_len(&self) -> usize {
        match self.modality {
            Modality::Video => self.shape[1..].iter().product(),
            _ => 1,
        }
    }

    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn ensure_same_shape(&self, other: &ModalityTensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(
                format!("{what} shape {:?} vs {:?}", self.shape, other.shape),
                self.data.len(),
                other.data.len(),
            ));
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(ModalityTensor::new(vec![0.0; 5], vec![2, 3], Modality::Generic).is_err());
        assert!(ModalityTensor::video(vec![0.0; 8], 2, 1, 2, 2).is_ok());
        assert!(ModalityTensor::new(vec![0.0; 4], vec![2, 2], Modality::Audio).is_err());
    }

    #[test]
    fn frame_views() {
        let v = ModalityTensor::video((0..8).map(|i| i as f32).collect(), 2, 1, 2, 2).unwrap();
        assert_eq!(v.frames(), 2);
        assert_eq!(v.frame(1), &[4.0, 5.0, 6.0, 7.0]);
    }
}
