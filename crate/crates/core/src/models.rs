//! Trainable desk-scale generators over paired clips.
//!
//! * [`VideoDiffusion`]: class-conditional ε-prediction DDPM.
//! * [`VideoFlow`]: class-conditional flow matching.
//! * [`AudioFlow`]: video-to-audio flow matching, one frame-aligned audio
//!   block at a time, conditioned on local video features, a clip summary
//!   and the class.
//! * [`JointModel`]: the coupled audio-video diffusion of [`crate::joint`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::diffusion::{cfg_combine, ddim_sample_with, p_sample_loop_with, q_sample_slice};
use crate::error::{Error, Result};
use crate::flowmatch::{cfm_pair, integrate_flow, FlowMethod, FLOW_TIME_SCALE};
use crate::joint::{class_onehot, video_feature_dim, video_frame_features, JointConfig, JointDenoiser, JointSampling};
use crate::netcore::{FrameNet, FrameNetConfig, Reduction};
use crate::rng::normal_vec;
use crate::schedule::{NoiseSchedule, ScheduleConfig};
use crate::tensor::ModalityTensor;

/// Clip shape of the full-scale setup.
pub const FULL_SCALE_SHAPE: VideoShape = VideoShape {
    frames: 16,
    channels: 3,
    height: 64,
    width: 64,
};
/// Generated clips scored per evaluation at full scale.
pub const FULL_SCALE_SAMPLES: usize = 25_600;

/// `[frames, channels, height, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoShape {
    pub fn len(&self) -> usize {
        self.frames * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn of(v: &ModalityTensor) -> Result<Self> {
        match v.shape() {
            &[frames, channels, height, width] => Ok(Self {
                frames,
                channels,
                height,
                width,
            }),
            other => Err(Error::Data(format!("expected a rank-4 video, got shape {other:?}"))),
        }
    }

    pub fn tensor(&self, data: &[f64]) -> Result<ModalityTensor> {
        ModalityTensor::video(
            data.iter().map(|&x| x as f32).collect(),
            self.frames,
            self.channels,
            self.height,
            self.width,
        )
    }

    fn check(&self, v: &ModalityTensor) -> Result<()> {
        if Self::of(v)? != *self {
            return Err(Error::Data(format!("video shape {:?} does not match {self:?}", v.shape())));
        }
        Ok(())
    }
}

/// Per-example training loss with its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleLoss {
    pub loss: f64,
    pub audio_loss: Option<f64>,
    pub video_loss: Option<f64>,
    pub grad: Vec<f64>,
}

impl ExampleLoss {
    fn single(loss: f64, grad: Vec<f64>) -> Self {
        Self {
            loss,
            audio_loss: None,
            video_loss: None,
            grad,
        }
    }
}

/// A model trained by the generic loop in [`crate::train`].
pub trait Trainable {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn param_count(&self) -> usize;
    /// Loss of one clip. `drop_cond` replaces the class by the null token.
    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss>;
}

/// The class to condition on during training.
fn train_label(pair: &PairedSample, drop_cond: bool) -> Option<u32> {
    if drop_cond {
        None
    } else {
        pair.cond_label
    }
}

/// Reverse-process sampler for [`VideoDiffusion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Sampler {
    Ancestral,
    Ddim { steps: usize },
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Ddim { steps: 50 }
    }
}

/// Class guidance for sampling: ω and an optional negative class whose
/// embedding replaces the null token in the unconditional branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGuidance {
    pub scale: f64,
    pub negative: Option<u32>,
}

impl ClassGuidance {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            negative: None,
        }
    }
}

/// Resolves optional guidance into the unconditional class vector and ω.
fn guidance_vectors(class: Option<u32>, guidance: Option<ClassGuidance>, num_classes: usize) -> Result<(Vec<f64>, Option<(f64, Vec<f64>)>)> {
    let cond = class_onehot(class, num_classes)?;
    match (class, guidance) {
        (None, Some(_)) => Err(Error::Configuration("guidance needs a class".into())),
        (_, Some(g)) => Ok((cond, Some((g.scale, class_onehot(g.negative, num_classes)?)))),
        (_, None) => Ok((cond, None)),
    }
}

/// `forward_clip` with classifier-free guidance over the class vector.
fn guided_forward(net: &FrameNet, x: &[f64], time: f64, extras: &[Vec<f64>], cond: &[f64], guidance: Option<&(f64, Vec<f64>)>) -> Result<Vec<f64>> {
    match guidance {
        None => net.forward_clip(x, time, extras, cond),
        Some((scale, uncond)) => {
            let u = net.forward_clip(x, time, extras, uncond)?;
            if *scale == 0.0 {
                return Ok(u);
            }
            let c = net.forward_clip(x, time, extras, cond)?;
            Ok(cfg_combine(&u, &c, *scale))
        }
    }
}

fn check_net(net: &FrameNet, frame_len: usize, extra_dim: usize, num_classes: usize) -> Result<()> {
    let c = &net.config;
    if c.frame_len != frame_len || c.extra_dim != extra_dim || c.class_dim != num_classes {
        return Err(Error::Configuration(format!(
            "network (frame {}, extra {}, classes {}) does not fit (frame {frame_len}, extra {extra_dim}, classes {num_classes})",
            c.frame_len, c.extra_dim, c.class_dim
        )));
    }
    Ok(())
}

/// Class-conditional DDPM; each frame is denoised with its two neighbours
/// in view.
#[derive(Debug, Clone)]
pub struct VideoDiffusion {
    pub net: FrameNet,
    pub shape: VideoShape,
    pub num_classes: usize,
    pub schedule_config: ScheduleConfig,
    schedule: NoiseSchedule,
}

impl VideoDiffusion {
    pub fn net_config(shape: VideoShape, num_classes: usize, hidden: Vec<usize>) -> FrameNetConfig {
        FrameNetConfig::new(shape.len() / shape.frames.max(1), 1, 0, num_classes, hidden)
    }

    pub fn new(net: FrameNet, shape: VideoShape, num_classes: usize, schedule_config: ScheduleConfig) -> Result<Self> {
        check_net(&net, shape.len() / shape.frames.max(1), 0, num_classes)?;
        Ok(Self {
            schedule: schedule_config.build()?,
            net,
            shape,
            num_classes,
            schedule_config,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Class-conditional sample; `None` for the class samples with the null
    /// token and no guidance.
    pub fn sample<R: Rng + ?Sized>(&self, class: Option<u32>, guidance: Option<ClassGuidance>, sampler: Sampler, rng: &mut R) -> Result<ModalityTensor> {
        let (cond, guidance) = guidance_vectors(class, guidance, self.num_classes)?;
        let eps = |x: &[f64], t: usize| guided_forward(&self.net, x, t as f64, &[], &cond, guidance.as_ref());
        let x_start = self.shape.tensor(&normal_vec(rng, self.shape.len()))?;
        match sampler {
            Sampler::Ancestral => p_sample_loop_with(eps, &x_start, &self.schedule, rng),
            Sampler::Ddim { steps } => {
                let ts = self.schedule.evenly_spaced_steps(steps);
                Ok(ddim_sample_with(eps, &x_start, &self.schedule, &ts, false)?.sample)
            }
        }
    }
}

impl Trainable for VideoDiffusion {
    fn params(&self) -> Vec<f64> {
        self.net.net.params().to_vec()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.net.set_params(params.to_vec())
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss> {
        self.shape.check(&pair.video)?;
        let t = rng.random_range(1..=self.schedule.len());
        let eps = normal_vec(rng, self.shape.len());
        let cond = class_onehot(train_label(pair, drop_cond), self.num_classes)?;
        let xt = q_sample_slice(&pair.video.to_f64(), t, &eps, &self.schedule)?;
        let lg = self.net.loss(&xt, t as f64, &[], &cond, &eps, Reduction::Mean)?;
        Ok(ExampleLoss::single(lg.loss, lg.grad))
    }
}

/// Integrates `net` as a velocity field over the whole clip.
#[allow(clippy::too_many_arguments)]
fn integrate_clip(
    net: &FrameNet,
    x0: &[f64],
    extras: &[Vec<f64>],
    cond: &[f64],
    guidance: Option<&(f64, Vec<f64>)>,
    steps: usize,
    method: FlowMethod,
) -> Result<Vec<f64>> {
    let v = |t: f64, x: &[f64]| guided_forward(net, x, t * FLOW_TIME_SCALE, extras, cond, guidance);
    Ok(integrate_flow(&v, x0, steps, method, false)?.x1)
}

/// Flow-matching loss summed over the clip: `‖v(t, x_t) - (x1 - x0)‖²`.
fn clip_cfm_loss(net: &FrameNet, x0: &[f64], x1: &[f64], t: f64, extras: &[Vec<f64>], cond: &[f64]) -> Result<ExampleLoss> {
    let (xt, u) = cfm_pair(x0, x1, t)?;
    let lg = net.loss(&xt, t * FLOW_TIME_SCALE, extras, cond, &u, Reduction::Sum)?;
    Ok(ExampleLoss::single(lg.loss, lg.grad))
}

/// Class-conditional flow matching with the same per-frame network layout
/// as [`VideoDiffusion`].
#[derive(Debug, Clone)]
pub struct VideoFlow {
    pub net: FrameNet,
    pub shape: VideoShape,
    pub num_classes: usize,
}

impl VideoFlow {
    pub fn net_config(shape: VideoShape, num_classes: usize, hidden: Vec<usize>) -> FrameNetConfig {
        VideoDiffusion::net_config(shape, num_classes, hidden)
    }

    pub fn new(net: FrameNet, shape: VideoShape, num_classes: usize) -> Result<Self> {
        check_net(&net, shape.len() / shape.frames.max(1), 0, num_classes)?;
        Ok(Self { net, shape, num_classes })
    }

    pub fn sample<R: Rng + ?Sized>(&self, class: Option<u32>, guidance: Option<ClassGuidance>, steps: usize, method: FlowMethod, rng: &mut R) -> Result<ModalityTensor> {
        let (cond, guidance) = guidance_vectors(class, guidance, self.num_classes)?;
        let x0 = normal_vec(rng, self.shape.len());
        let x1 = integrate_clip(&self.net, &x0, &[], &cond, guidance.as_ref(), steps, method)?;
        self.shape.tensor(&x1)
    }
}

impl Trainable for VideoFlow {
    fn params(&self) -> Vec<f64> {
        self.net.net.params().to_vec()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.net.set_params(params.to_vec())
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss> {
        self.shape.check(&pair.video)?;
        let t: f64 = rng.random();
        let x0 = normal_vec(rng, self.shape.len());
        let cond = class_onehot(train_label(pair, drop_cond), self.num_classes)?;
        clip_cfm_loss(&self.net, &x0, &pair.video.to_f64(), t, &[], &cond)
    }
}

/// Length of the video context of one audio block for frames of `height`
/// rows: features of frames `f-1, f, f+1`, then the clip mean.
pub fn audio_flow_context_dim(height: usize) -> usize {
    4 * video_feature_dim(height)
}

/// Video context of every audio block.
pub fn audio_flow_contexts(video: &ModalityTensor) -> Vec<Vec<f64>> {
    let feats = video_frame_features(video);
    let frames = feats.len();
    let mut summary = vec![0.0; feats.first().map_or(0, Vec::len)];
    for f in &feats {
        for (s, v) in summary.iter_mut().zip(f) {
            *s += v / frames as f64;
        }
    }
    (0..frames)
        .map(|f| {
            let prev = &feats[f.saturating_sub(1)];
            let next = &feats[(f + 1).min(frames - 1)];
            [prev.as_slice(), &feats[f], next, &summary].concat()
        })
        .collect()
}

/// Video-to-audio flow matching over frame-aligned audio blocks.
#[derive(Debug, Clone)]
pub struct AudioFlow {
    pub net: FrameNet,
    pub num_classes: usize,
}

impl AudioFlow {
    pub fn net_config(samples_per_frame: usize, height: usize, num_classes: usize, hidden: Vec<usize>) -> FrameNetConfig {
        FrameNetConfig::new(samples_per_frame, 0, audio_flow_context_dim(height), num_classes, hidden)
    }

    pub fn new(net: FrameNet, num_classes: usize) -> Result<Self> {
        if net.config.context != 0 || net.config.class_dim != num_classes {
            return Err(Error::Configuration("audio flow network must be context-free and sized for the classes".into()));
        }
        Ok(Self { net, num_classes })
    }

    pub fn samples_per_frame(&self) -> usize {
        self.net.config.frame_len
    }

    fn contexts(&self, video: &ModalityTensor) -> Result<Vec<Vec<f64>>> {
        let shape = VideoShape::of(video)?;
        if audio_flow_context_dim(shape.height) != self.net.config.extra_dim {
            return Err(Error::Data(format!("video height {} does not fit the audio flow network", shape.height)));
        }
        Ok(audio_flow_contexts(video))
    }

    /// Audio of `frames * samples_per_frame` samples for `video`. Guidance
    /// compares against the same video context with the null (or negative)
    /// class.
    pub fn sample<R: Rng + ?Sized>(&self, video: &ModalityTensor, class: Option<u32>, guidance: Option<ClassGuidance>, steps: usize, method: FlowMethod, rng: &mut R) -> Result<ModalityTensor> {
        let extras = self.contexts(video)?;
        let (cond, guidance) = guidance_vectors(class, guidance, self.num_classes)?;
        let x0 = normal_vec(rng, extras.len() * self.samples_per_frame());
        let audio = integrate_clip(&self.net, &x0, &extras, &cond, guidance.as_ref(), steps, method)?;
        Ok(ModalityTensor::audio(audio.iter().map(|&x| x as f32).collect()))
    }
}

impl Trainable for AudioFlow {
    fn params(&self) -> Vec<f64> {
        self.net.net.params().to_vec()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.net.set_params(params.to_vec())
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Squared norm over the whole clip.
    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss> {
        if pair.samples_per_frame != self.samples_per_frame() {
            return Err(Error::dim("samples_per_frame", self.samples_per_frame(), pair.samples_per_frame));
        }
        let extras = self.contexts(&pair.video)?;
        let cond = class_onehot(train_label(pair, drop_cond), self.num_classes)?;
        let t: f64 = rng.random();
        let x0 = normal_vec(rng, pair.audio.len());
        clip_cfm_loss(&self.net, &x0, &pair.audio.to_f64(), t, &extras, &cond)
    }
}

/// Probability of training a joint example with the cross-modal
/// conditioning zeroed, which makes cross guidance possible at sampling.
pub const CROSS_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct JointModel {
    pub denoiser: JointDenoiser,
    pub schedule_config: ScheduleConfig,
    schedule: NoiseSchedule,
}

impl JointModel {
    pub fn new(denoiser: JointDenoiser, schedule_config: ScheduleConfig) -> Result<Self> {
        Ok(Self {
            schedule: schedule_config.build()?,
            denoiser,
            schedule_config,
        })
    }

    pub fn config(&self) -> &JointConfig {
        self.denoiser.config()
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn sample<R: Rng + ?Sized>(&self, class: Option<u32>, rng: &mut R) -> Result<PairedSample> {
        self.denoiser.sample(&self.schedule, class, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, class: Option<u32>, opts: JointSampling, rng: &mut R) -> Result<PairedSample> {
        self.denoiser.sample_with(&self.schedule, class, opts, rng)
    }

    pub fn sample_audio_for_video<R: Rng + ?Sized>(&self, video: &ModalityTensor, class: Option<u32>, guidance: f64, rng: &mut R) -> Result<ModalityTensor> {
        self.denoiser.sample_audio_for_video(video, &self.schedule, class, guidance, rng)
    }
}

impl Trainable for JointModel {
    fn params(&self) -> Vec<f64> {
        self.denoiser.params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.denoiser.set_params(params)
    }

    fn param_count(&self) -> usize {
        self.denoiser.param_count()
    }

    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss> {
        let cfg = self.denoiser.config();
        let t = rng.random_range(1..=self.schedule.len());
        let shift = rng.random_range(0..cfg.cross_window);
        let shift = (rng.random::<f64>() >= CROSS_DROPOUT).then_some(shift);
        let eps_a = pair.audio.like_from_f64(&normal_vec(rng, pair.audio.len()))?;
        let eps_v = pair.video.like_from_f64(&normal_vec(rng, pair.video.len()))?;
        let l = self
            .denoiser
            .joint_loss_with(pair, t, &eps_a, &eps_v, &self.schedule, train_label(pair, drop_cond), shift)?;
        Ok(ExampleLoss {
            loss: l.loss,
            audio_loss: Some(l.audio_loss),
            video_loss: Some(l.video_loss),
            grad: l.grad,
        })
    }
}

/// Any of the trainable generators, as stored in a checkpoint.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Ddpm(VideoDiffusion),
    Joint(JointModel),
    FlowVideo(VideoFlow),
    FlowAudio(AudioFlow),
}

/// Architecture description sufficient to rebuild an [`AnyModel`] from a
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Ddpm {
        net: FrameNetConfig,
        shape: VideoShape,
        num_classes: usize,
        schedule: ScheduleConfig,
    },
    Joint {
        config: JointConfig,
        schedule: ScheduleConfig,
    },
    FlowVideo {
        net: FrameNetConfig,
        shape: VideoShape,
        num_classes: usize,
    },
    FlowAudio {
        net: FrameNetConfig,
        num_classes: usize,
    },
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Ddpm { .. } => "ddpm",
            ModelSpec::Joint { .. } => "joint",
            ModelSpec::FlowVideo { .. } => "flow_video",
            ModelSpec::FlowAudio { .. } => "flow_audio",
        }
    }

    /// Fresh model with seeded initial weights.
    pub fn init(&self, seed: u64) -> Result<AnyModel> {
        Ok(match self.clone() {
            ModelSpec::Ddpm {
                net,
                shape,
                num_classes,
                schedule,
            } => AnyModel::Ddpm(VideoDiffusion::new(FrameNet::new(net, seed)?, shape, num_classes, schedule)?),
            ModelSpec::Joint { config, schedule } => AnyModel::Joint(JointModel::new(JointDenoiser::new(config, seed)?, schedule)?),
            ModelSpec::FlowVideo {
                net,
                shape,
                num_classes,
            } => AnyModel::FlowVideo(VideoFlow::new(FrameNet::new(net, seed)?, shape, num_classes)?),
            ModelSpec::FlowAudio { net, num_classes } => AnyModel::FlowAudio(AudioFlow::new(FrameNet::new(net, seed)?, num_classes)?),
        })
    }

    pub fn with_params(&self, params: &[f64]) -> Result<AnyModel> {
        let mut m = self.init(0)?;
        m.set_params(params)?;
        Ok(m)
    }
}

impl AnyModel {
    pub fn spec(&self) -> ModelSpec {
        match self {
            AnyModel::Ddpm(m) => ModelSpec::Ddpm {
                net: m.net.config.clone(),
                shape: m.shape,
                num_classes: m.num_classes,
                schedule: m.schedule_config.clone(),
            },
            AnyModel::Joint(m) => ModelSpec::Joint {
                config: m.config().clone(),
                schedule: m.schedule_config.clone(),
            },
            AnyModel::FlowVideo(m) => ModelSpec::FlowVideo {
                net: m.net.config.clone(),
                shape: m.shape,
                num_classes: m.num_classes,
            },
            AnyModel::FlowAudio(m) => ModelSpec::FlowAudio {
                net: m.net.config.clone(),
                num_classes: m.num_classes,
            },
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Ddpm($m) => $body,
            AnyModel::Joint($m) => $body,
            AnyModel::FlowVideo($m) => $body,
            AnyModel::FlowAudio($m) => $body,
        }
    };
}

impl Trainable for AnyModel {
    fn params(&self) -> Vec<f64> {
        dispatch!(self, m => m.params())
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        dispatch!(self, m => m.set_params(params))
    }

    fn param_count(&self) -> usize {
        dispatch!(self, m => m.param_count())
    }

    fn example_loss<R: Rng + ?Sized>(&self, pair: &PairedSample, drop_cond: bool, rng: &mut R) -> Result<ExampleLoss> {
        dispatch!(self, m => m.example_loss(pair, drop_cond, rng))
    }
}
