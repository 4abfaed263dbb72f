use serde::{Deserialize, Serialize};

use super::mlp::{DenoiserNet, NetConfig, NetInput};
use crate::diffusion::LossGrad;
use crate::error::{Error, Result};

/// Architecture of a [`FrameNet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameNetConfig {
    pub frame_len: usize,
    /// Neighbouring frames visible on each side.
    pub context: usize,
    /// Per-frame side information (cross-modal features).
    pub extra_dim: usize,
    pub class_dim: usize,
    pub time_embed_dim: usize,
    pub hidden: Vec<usize>,
    pub experts: usize,
}

impl FrameNetConfig {
    pub fn new(frame_len: usize, context: usize, extra_dim: usize, class_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            frame_len,
            context,
            extra_dim,
            class_dim,
            time_embed_dim: 16,
            hidden,
            experts: 1,
        }
    }

    pub fn cond_dim(&self) -> usize {
        2 * self.context * self.frame_len + self.extra_dim + self.class_dim
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            data_dim: self.frame_len,
            cond_dim: self.cond_dim(),
            time_embed_dim: self.time_embed_dim,
            hidden: self.hidden.clone(),
            experts: self.experts,
            gated_skip: true,
        }
    }
}

/// How per-element squared errors are combined into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// Frame-wise denoiser with weights shared across frames.
///
/// Frame `f` of the output is `net(x_f, time, cond_f)` where `cond_f`
/// concatenates the input frames `f-c..f-1, f+1..f+c` (indices clamped to
/// the clip), the per-frame extra vector and the class vector.
#[derive(Debug, Clone)]
pub struct FrameNet {
    pub config: FrameNetConfig,
    pub net: DenoiserNet,
}

impl FrameNet {
    pub fn new(config: FrameNetConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            net: DenoiserNet::new(config.net_config(), seed)?,
            config,
        })
    }

    pub fn zeros(config: FrameNetConfig) -> Result<Self> {
        Ok(Self {
            net: DenoiserNet::zeros(config.net_config())?,
            config,
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn check(&self, x: &[f64], extras: &[Vec<f64>], class: &[f64]) -> Result<usize> {
        let c = &self.config;
        if x.is_empty() || x.len() % c.frame_len != 0 {
            return Err(Error::dim("clip length (multiple of frame_len)", c.frame_len, x.len()));
        }
        let frames = x.len() / c.frame_len;
        if c.extra_dim > 0 {
            if extras.len() != frames {
                return Err(Error::dim("per-frame extras", frames, extras.len()));
            }
            if let Some(e) = extras.iter().find(|e| e.len() != c.extra_dim) {
                return Err(Error::dim("extra vector", c.extra_dim, e.len()));
            }
        }
        if class.len() != c.class_dim {
            return Err(Error::dim("class vector", c.class_dim, class.len()));
        }
        Ok(frames)
    }

    fn frame_cond(&self, x: &[f64], frames: usize, f: usize, extras: &[Vec<f64>], class: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let n = c.frame_len;
        let mut cond = Vec::with_capacity(c.cond_dim());
        for d in 1..=c.context {
            let g = f.saturating_sub(d);
            cond.extend_from_slice(&x[g * n..(g + 1) * n]);
        }
        for d in 1..=c.context {
            let g = (f + d).min(frames - 1);
            cond.extend_from_slice(&x[g * n..(g + 1) * n]);
        }
        if c.extra_dim > 0 {
            cond.extend_from_slice(&extras[f]);
        }
        cond.extend_from_slice(class);
        cond
    }

    fn cond_arg(cond: &[f64]) -> Option<&[f64]> {
        (!cond.is_empty()).then_some(cond)
    }

    pub fn forward_clip(&self, x: &[f64], time: f64, extras: &[Vec<f64>], class: &[f64]) -> Result<Vec<f64>> {
        let frames = self.check(x, extras, class)?;
        let n = self.config.frame_len;
        let mut out = Vec::with_capacity(x.len());
        for f in 0..frames {
            let cond = self.frame_cond(x, frames, f, extras, class);
            out.extend(self.net.forward(NetInput::new(&x[f * n..(f + 1) * n], time, Self::cond_arg(&cond)))?);
        }
        Ok(out)
    }

    /// Squared error of `forward_clip(x, ..)` against `target`, with the
    /// gradient added into `grad`.
    pub fn loss_into(&self, x: &[f64], time: f64, extras: &[Vec<f64>], class: &[f64], target: &[f64], reduction: Reduction, grad: &mut [f64]) -> Result<f64> {
        let frames = self.check(x, extras, class)?;
        if target.len() != x.len() {
            return Err(Error::dim("regression target", x.len(), target.len()));
        }
        let n = self.config.frame_len;
        let scale = match reduction {
            Reduction::Mean => 1.0 / x.len() as f64,
            Reduction::Sum => 1.0,
        };
        let mut loss = 0.0;
        for f in 0..frames {
            let cond = self.frame_cond(x, frames, f, extras, class);
            let (pred, tape) = self
                .net
                .forward_with_tape(NetInput::new(&x[f * n..(f + 1) * n], time, Self::cond_arg(&cond)))?;
            let g: Vec<f64> = pred
                .iter()
                .zip(&target[f * n..(f + 1) * n])
                .map(|(p, y)| {
                    loss += (p - y) * (p - y);
                    2.0 * (p - y) * scale
                })
                .collect();
            self.net.backward_into(&tape, &g, grad)?;
        }
        Ok(loss * scale)
    }

    pub fn loss(&self, x: &[f64], time: f64, extras: &[Vec<f64>], class: &[f64], target: &[f64], reduction: Reduction) -> Result<LossGrad> {
        let mut grad = vec![0.0; self.param_count()];
        let loss = self.loss_into(x, time, extras, class, target, reduction, &mut grad)?;
        Ok(LossGrad { loss, grad })
    }
}
