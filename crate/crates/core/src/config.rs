//! Run configuration: one JSON document with a block per concern. Every
//! field has a default, so `{}` is a complete configuration.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DataConfig, ManifestShapes};
use crate::error::{Error, Result};
use crate::flowmatch::FlowMethod;
use crate::joint::JointConfig;
use crate::models::{AudioFlow, ModelSpec, Sampler, VideoDiffusion, VideoFlow, VideoShape};
use crate::pipeline::PipelineOptions;
use crate::schedule::ScheduleConfig;
use crate::train::TrainConfig;

/// Scene classes: bouncing ball and pulsing light.
pub const NUM_CLASSES: usize = 2;

/// Network sizes shared by every mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub video_hidden: Vec<usize>,
    pub audio_hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub experts: usize,
    /// Frames per cross-modal pooling window of the joint model.
    pub cross_window: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let j = JointConfig::default();
        Self {
            video_hidden: j.video_hidden,
            audio_hidden: j.audio_hidden,
            time_embed_dim: j.time_embed_dim,
            experts: j.experts,
            cross_window: j.cross_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Clips generated by `sample` when no count is given.
    pub generated: usize,
    pub sampler: Sampler,
    pub flow_steps: usize,
    pub flow_method: FlowMethod,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let p = PipelineOptions::default();
        Self {
            generated: 20,
            sampler: p.video_sampler,
            flow_steps: p.flow_steps,
            flow_method: p.flow_method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineOptions,
}

/// Which objective `train` optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Class-conditional video DDPM.
    Ddpm,
    /// Coupled audio-video diffusion.
    Joint,
    /// Class-conditional video flow matching.
    Flow,
    /// Video-to-audio flow matching.
    FlowV2a,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(Self::Ddpm),
            "joint" => Ok(Self::Joint),
            "flow" => Ok(Self::Flow),
            "flow-v2a" | "flow_v2a" => Ok(Self::FlowV2a),
            other => Err(Error::Configuration(format!("unknown training mode {other:?}"))),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.build()?;
        self.train.validate()?;
        self.data.validate()?;
        self.joint_config(&self.data.shapes(), self.data.samples_per_frame)?;
        if self.eval.flow_steps == 0 || self.pipeline.flow_steps == 0 {
            return Err(Error::Configuration("flow_steps must be positive".into()));
        }
        if self.model.video_hidden.is_empty() || self.model.audio_hidden.is_empty() {
            return Err(Error::Configuration("hidden layer lists must be non-empty".into()));
        }
        Ok(())
    }

    fn video_shape(shapes: &ManifestShapes) -> Result<VideoShape> {
        match *shapes.video.as_slice() {
            [frames, channels, height, width] => Ok(VideoShape {
                frames,
                channels,
                height,
                width,
            }),
            ref other => Err(Error::Data(format!("expected a rank-4 video shape, got {other:?}"))),
        }
    }

    pub fn joint_config(&self, shapes: &ManifestShapes, samples_per_frame: usize) -> Result<JointConfig> {
        let v = Self::video_shape(shapes)?;
        let cfg = JointConfig {
            frames: v.frames,
            channels: v.channels,
            height: v.height,
            width: v.width,
            samples_per_frame,
            cross_window: self.model.cross_window,
            num_classes: NUM_CLASSES,
            time_embed_dim: self.model.time_embed_dim,
            video_hidden: self.model.video_hidden.clone(),
            audio_hidden: self.model.audio_hidden.clone(),
            experts: self.model.experts,
        };
        cfg.validate().map_err(|e| Error::Configuration(e.to_string()))?;
        Ok(cfg)
    }

    /// Architecture for `mode` on clips of the given shapes.
    pub fn model_spec(&self, mode: TrainMode, shapes: &ManifestShapes, samples_per_frame: usize) -> Result<ModelSpec> {
        let shape = Self::video_shape(shapes)?;
        let m = &self.model;
        let sized = |mut net: crate::netcore::FrameNetConfig| {
            net.time_embed_dim = m.time_embed_dim;
            net.experts = m.experts;
            net
        };
        Ok(match mode {
            TrainMode::Ddpm => ModelSpec::Ddpm {
                net: sized(VideoDiffusion::net_config(shape, NUM_CLASSES, m.video_hidden.clone())),
                shape,
                num_classes: NUM_CLASSES,
                schedule: self.schedule.clone(),
            },
            TrainMode::Joint => ModelSpec::Joint {
                config: self.joint_config(shapes, samples_per_frame)?,
                schedule: self.schedule.clone(),
            },
            TrainMode::Flow => ModelSpec::FlowVideo {
                net: sized(VideoFlow::net_config(shape, NUM_CLASSES, m.video_hidden.clone())),
                shape,
                num_classes: NUM_CLASSES,
            },
            TrainMode::FlowV2a => ModelSpec::FlowAudio {
                net: sized(AudioFlow::net_config(samples_per_frame, shape.height, NUM_CLASSES, m.audio_hidden.clone())),
                num_classes: NUM_CLASSES,
            },
        })
    }
}
