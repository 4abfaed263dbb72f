//! Two-stage generation: a prompt becomes a video, then the video and the
//! prompt together become audio.
//!
//! Prompts are resolved to class labels through a keyword table. Stage 2
//! only ever sees the finished video tensor and the prompt.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::flowmatch::{FlowMethod, DEFAULT_FLOW_STEPS};
use crate::models::{AnyModel, AudioFlow, ClassGuidance, JointModel, Sampler, Trainable, VideoDiffusion, VideoFlow};
use crate::rng::stream_rng;
use crate::tensor::{Modality, ModalityTensor};

/// Keyword table: the first listed keyword found in the prompt wins.
pub const PROMPT_KEYWORDS: &[(&str, u32)] = &[
    ("ball", 0),
    ("bounce", 0),
    ("bouncing", 0),
    ("click", 0),
    ("light", 1),
    ("pulse", 1),
    ("pulsing", 1),
    ("tone", 1),
    ("glow", 1),
];

/// Class of the first keyword appearing as a word of `text`.
pub fn resolve_keyword(text: &str) -> Option<u32> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    PROMPT_KEYWORDS
        .iter()
        .find(|(k, _)| words.iter().any(|w| w == k))
        .map(|&(_, c)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    /// Stored verbatim; only the resolved label conditions generation.
    pub text: String,
    /// `None` when no keyword matched.
    pub class_label: Option<u32>,
    /// Video guidance scale ω ≥ 0.
    pub guidance: f64,
    pub negative_text: Option<String>,
}

impl Prompt {
    pub fn new(text: impl Into<String>, guidance: f64) -> Self {
        let text = text.into();
        Self {
            class_label: resolve_keyword(&text),
            text,
            guidance,
            negative_text: None,
        }
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Self {
        self.negative_text = Some(negative.into());
        self
    }

    pub fn label(&self) -> Result<u32> {
        self.class_label.ok_or_else(|| Error::PromptResolution(self.text.clone()))
    }

    pub fn negative_label(&self) -> Result<Option<u32>> {
        self.negative_text
            .as_deref()
            .map(|n| resolve_keyword(n).ok_or_else(|| Error::PromptResolution(n.to_string())))
            .transpose()
    }

    fn check_guidance(&self) -> Result<()> {
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::param(format!("guidance {} must be finite and >= 0", self.guidance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoBackendKind {
    ToyDiffusion,
    ToyFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioBackendKind {
    ToyFlowV2a,
    ToyJoint,
}

/// Sampler settings shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub video_sampler: Sampler,
    pub flow_steps: usize,
    pub flow_method: FlowMethod,
    /// Guidance scale of the audio stage.
    pub audio_guidance: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            video_sampler: Sampler::default(),
            flow_steps: DEFAULT_FLOW_STEPS,
            flow_method: FlowMethod::default(),
            audio_guidance: 1.0,
        }
    }
}

/// What a run record says about a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    pub train_steps: usize,
    pub param_count: usize,
    pub crate_version: String,
}

fn info(kind: &str, model: &impl Trainable, train_steps: usize) -> BackendInfo {
    BackendInfo {
        kind: kind.into(),
        train_steps,
        param_count: model.param_count(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn require_trained(steps: usize, what: &str) -> Result<()> {
    if steps == 0 {
        return Err(Error::State(format!("{what} backend has not been trained")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum VideoBackend {
    ToyDiffusion { model: VideoDiffusion, train_steps: usize },
    ToyFlow { model: VideoFlow, train_steps: usize },
}

impl VideoBackend {
    /// Wraps a trained model; `train_steps == 0` is a state error.
    pub fn from_model(model: AnyModel, train_steps: usize) -> Result<Self> {
        require_trained(train_steps, "video")?;
        match model {
            AnyModel::Ddpm(model) => Ok(Self::ToyDiffusion { model, train_steps }),
            AnyModel::FlowVideo(model) => Ok(Self::ToyFlow { model, train_steps }),
            other => Err(Error::Configuration(format!(
                "a {} checkpoint cannot serve as video backend",
                other.spec().kind_name()
            ))),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let steps = ckpt.step();
        Self::from_model(ckpt.model, steps)
    }

    pub fn kind(&self) -> VideoBackendKind {
        match self {
            Self::ToyDiffusion { .. } => VideoBackendKind::ToyDiffusion,
            Self::ToyFlow { .. } => VideoBackendKind::ToyFlow,
        }
    }

    pub fn info(&self) -> BackendInfo {
        match self {
            Self::ToyDiffusion { model, train_steps } => info("toy_diffusion", model, *train_steps),
            Self::ToyFlow { model, train_steps } => info("toy_flow", model, *train_steps),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AudioBackend {
    ToyFlowV2a { model: AudioFlow, train_steps: usize },
    ToyJoint { model: JointModel, train_steps: usize },
}

impl AudioBackend {
    pub fn from_model(model: AnyModel, train_steps: usize) -> Result<Self> {
        require_trained(train_steps, "audio")?;
        match model {
            AnyModel::FlowAudio(model) => Ok(Self::ToyFlowV2a { model, train_steps }),
            AnyModel::Joint(model) => Ok(Self::ToyJoint { model, train_steps }),
            other => Err(Error::Configuration(format!(
                "a {} checkpoint cannot serve as audio backend",
                other.spec().kind_name()
            ))),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let steps = ckpt.step();
        Self::from_model(ckpt.model, steps)
    }

    pub fn kind(&self) -> AudioBackendKind {
        match self {
            Self::ToyFlowV2a { .. } => AudioBackendKind::ToyFlowV2a,
            Self::ToyJoint { .. } => AudioBackendKind::ToyJoint,
        }
    }

    pub fn info(&self) -> BackendInfo {
        match self {
            Self::ToyFlowV2a { model, train_steps } => info("toy_flow_v2a", model, *train_steps),
            Self::ToyJoint { model, train_steps } => info("toy_joint", model, *train_steps),
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        match self {
            Self::ToyFlowV2a { model, .. } => model.samples_per_frame(),
            Self::ToyJoint { model, .. } => model.config().samples_per_frame,
        }
    }
}

/// RNG stream of each stage under one pipeline seed.
const VIDEO_STREAM: u64 = 1;
const AUDIO_STREAM: u64 = 2;

/// Stage 1: class-conditional video with guidance ω from the prompt. A
/// negative prompt's class replaces the null token in the guidance
/// combination.
pub fn generate_video(prompt: &Prompt, backend: &VideoBackend, options: &PipelineOptions, seed: u64) -> Result<ModalityTensor> {
    prompt.check_guidance()?;
    let label = prompt.label()?;
    let guidance = Some(ClassGuidance {
        scale: prompt.guidance,
        negative: prompt.negative_label()?,
    });
    let mut rng = stream_rng(seed, VIDEO_STREAM);
    match backend {
        VideoBackend::ToyDiffusion { model, .. } => model.sample(Some(label), guidance, options.video_sampler, &mut rng),
        VideoBackend::ToyFlow { model, .. } => model.sample(Some(label), guidance, options.flow_steps, options.flow_method, &mut rng),
    }
}

/// Stage 2: audio of `frames * samples_per_frame` samples for `video`.
/// The joint backend samples its audio chain with the video fixed; its
/// guidance runs against the null class only, so it rejects negative prompts.
pub fn generate_audio(video: &ModalityTensor, prompt: &Prompt, backend: &AudioBackend, options: &PipelineOptions, seed: u64) -> Result<ModalityTensor> {
    if video.modality() != Modality::Video {
        return Err(Error::Data("stage 2 expects a video tensor".into()));
    }
    let label = prompt.label()?;
    let negative = prompt.negative_label()?;
    let mut rng = stream_rng(seed, AUDIO_STREAM);
    match backend {
        AudioBackend::ToyFlowV2a { model, .. } => {
            if !(options.audio_guidance >= 0.0 && options.audio_guidance.is_finite()) {
                return Err(Error::param(format!("audio guidance {} must be finite and >= 0", options.audio_guidance)));
            }
            let guidance = ClassGuidance {
                scale: options.audio_guidance,
                negative,
            };
            model.sample(video, Some(label), Some(guidance), options.flow_steps, options.flow_method, &mut rng)
        }
        AudioBackend::ToyJoint { model, .. } => {
            if negative.is_some() {
                return Err(Error::Configuration("the toy_joint audio backend does not support negative prompts".into()));
            }
            model.sample_audio_for_video(video, Some(label), options.audio_guidance, &mut rng)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub prompt: Prompt,
    pub seed: u64,
    pub options: PipelineOptions,
    pub video_backend: BackendInfo,
    pub audio_backend: BackendInfo,
    pub video_seconds: f64,
    pub audio_seconds: f64,
    pub frames: usize,
    pub samples_per_frame: usize,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Runs both stages. Errors carry the name of the stage that failed.
pub fn run_pipeline(prompt: &Prompt, video_backend: &VideoBackend, audio_backend: &AudioBackend, options: &PipelineOptions, seed: u64) -> Result<(PairedSample, RunRecord)> {
    let clock = Instant::now();
    let video = stage("video", generate_video(prompt, video_backend, options, seed))?;
    let video_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let audio = stage("audio", generate_audio(&video, prompt, audio_backend, options, seed))?;
    let audio_seconds = clock.elapsed().as_secs_f64();
    let spf = audio_backend.samples_per_frame();
    let pair = stage("assemble", PairedSample::new(audio, video, prompt.class_label, spf))?;
    let record = RunRecord {
        prompt: prompt.clone(),
        seed,
        options: *options,
        video_backend: video_backend.info(),
        audio_backend: audio_backend.info(),
        video_seconds,
        audio_seconds,
        frames: pair.frames(),
        samples_per_frame: spf,
    };
    Ok((pair, record))
}

fn to_byte(x: f32) -> u8 {
    (((x as f64 + 1.0) * 0.5).clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Frames laid out left to right, `columns` per row, as an 8-bit PNG
/// (grayscale for one channel, RGB for three). Pixel values in [-1, 1]
/// map to 0..=255.
pub fn write_png_strip(video: &ModalityTensor, columns: usize, path: &Path) -> Result<()> {
    let shape = video.shape();
    let [frames, channels, h, w] = *shape else {
        return Err(Error::Data(format!("expected a rank-4 video, got shape {shape:?}")));
    };
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Data(format!("cannot export {c}-channel video as PNG"))),
    };
    let cols = columns.clamp(1, frames.max(1));
    let rows = frames.div_ceil(cols);
    let (img_w, img_h) = (cols * w, rows * h);
    let mut pixels = vec![0u8; img_w * img_h * channels];
    for f in 0..frames {
        let frame = video.frame(f);
        let (ox, oy) = ((f % cols) * w, (f / cols) * h);
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    pixels[((oy + y) * img_w + ox + x) * channels + c] = to_byte(frame[(c * h + y) * w + x]);
                }
            }
        }
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img_w as u32, img_h as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Data(format!("png: {e}")))?;
    writer.write_image_data(&pixels).map_err(|e| Error::Data(format!("png: {e}")))?;
    writer.finish().map_err(|e| Error::Data(format!("png: {e}")))?;
    Ok(())
}

/// Mono 16-bit PCM WAV; samples are clamped to [-1, 1].
pub fn write_wav(audio: &ModalityTensor, sample_rate: u32, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| Error::Data(format!("wav: {e}"));
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &a in audio.data() {
        w.write_sample((a.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)?;
    Ok(())
}
