use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PairedSample;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::ModalityTensor;

/// Length of the click transient in samples.
pub const CLICK_LEN: usize = 5;

/// Impact speeds below this (pixels per frame) leave the ball resting on the
/// floor instead of producing another bounce.
const REST_SPEED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Class 0: a ball falling under gravity; a click sounds at every bounce.
    BouncingBall,
    /// Class 1: a light pulsing in brightness; a tone whose amplitude follows it.
    PulsingLight,
}

impl SceneKind {
    pub fn label(self) -> u32 {
        match self {
            SceneKind::BouncingBall => 0,
            SceneKind::PulsingLight => 1,
        }
    }

    pub fn from_label(label: u32) -> Result<Self> {
        match label {
            0 => Ok(SceneKind::BouncingBall),
            1 => Ok(SceneKind::PulsingLight),
            other => Err(Error::param(format!("unknown scene class {other}"))),
        }
    }
}

/// Ball center in pixel units (y grows downward) and its velocity in pixels
/// per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySceneSpec {
    pub kind: SceneKind,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub ball_radius: f64,
    /// Pixels per frame squared.
    pub gravity: f64,
    pub restitution: f64,
    pub tone_hz: f64,
    pub click_amplitude: f64,
    pub samples_per_frame: usize,
    pub fps: f64,
    /// Fixed initial ball state; drawn from the seed when absent.
    pub initial: Option<BallState>,
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::BouncingBall,
            frames: 16,
            channels: 1,
            height: 16,
            width: 16,
            ball_radius: 2.0,
            gravity: 0.5,
            restitution: 0.9,
            tone_hz: 160.0,
            click_amplitude: 0.9,
            samples_per_frame: 160,
            fps: 8.0,
            initial: None,
        }
    }
}

impl ToySceneSpec {
    pub fn sample_rate(&self) -> f64 {
        self.samples_per_frame as f64 * self.fps
    }

    /// y coordinate of the ball center when resting on the floor.
    pub fn floor_y(&self) -> f64 {
        self.height as f64 - self.ball_radius
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.channels == 0 || self.samples_per_frame == 0 {
            return Err(Error::param("frames, channels and samples_per_frame must be positive"));
        }
        if !(self.ball_radius > 0.0) {
            return Err(Error::param("ball_radius must be positive"));
        }
        let limit = self.height.min(self.width) as f64 / 2.0;
        if self.ball_radius >= limit {
            return Err(Error::param(format!(
                "ball_radius {} must be below half the frame size ({limit})",
                self.ball_radius
            )));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::param("restitution must lie in [0, 1]"));
        }
        if self.gravity < 0.0 || !self.gravity.is_finite() {
            return Err(Error::param("gravity must be finite and non-negative"));
        }
        if !(self.click_amplitude.abs() <= 1.0) {
            return Err(Error::param("click_amplitude must lie in [-1, 1]"));
        }
        if !(self.fps > 0.0) || !(self.tone_hz >= 0.0) {
            return Err(Error::param("fps must be positive and tone_hz non-negative"));
        }
        Ok(())
    }
}

/// Ground truth returned alongside a generated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEvents {
    /// Frames at which a bounce occurs (nearest frame to the impact time),
    /// strictly increasing.
    pub bounce_frames: Vec<usize>,
    /// Exact impact times in frame units.
    pub bounce_times: Vec<f64>,
    /// Per-frame light brightness in [0, 1] (pulsing-light scenes only).
    pub brightness: Vec<f64>,
}

/// Renders a clip for `spec` with randomness drawn from `seed`.
pub fn generate_clip(spec: &ToySceneSpec, seed: u64) -> Result<(PairedSample, ClipEvents)> {
    spec.validate()?;
    let mut rng = stream_rng(seed, 0x5ce7e);
    match spec.kind {
        SceneKind::BouncingBall => bouncing_ball(spec, &mut rng),
        SceneKind::PulsingLight => pulsing_light(spec, &mut rng),
    }
}

fn random_ball<R: Rng>(spec: &ToySceneSpec, rng: &mut R) -> BallState {
    let r = spec.ball_radius;
    let floor = spec.floor_y();
    let top = r + 0.25 * (floor - r);
    let low = r + 0.6 * (floor - r);
    BallState {
        x: rng.random_range(r..=spec.width as f64 - r),
        y: rng.random_range(top..=low),
        vx: rng.random_range(-0.8..=0.8),
        vy: rng.random_range(0.0..=0.5),
    }
}

/// Advances the ball over one frame, appending impact times.
fn step_ball(spec: &ToySceneSpec, ball: &mut BallState, start: f64, impacts: &mut Vec<f64>) {
    let g = spec.gravity;
    let floor = spec.floor_y();
    let r = spec.ball_radius;
    let mut remaining = 1.0;
    let mut now = start;
    while remaining > 0.0 {
        // Solve y + vy τ + g τ²/2 = floor for the first τ > 0.
        let gap = floor - ball.y;
        let tau = if ball.vy == 0.0 && g == 0.0 {
            f64::INFINITY
        } else if g == 0.0 {
            if ball.vy > 0.0 { gap / ball.vy } else { f64::INFINITY }
        } else {
            let disc = ball.vy * ball.vy + 2.0 * g * gap;
            if disc < 0.0 {
                f64::INFINITY
            } else {
                (-ball.vy + disc.sqrt()) / g
            }
        };
        let resting = gap <= 1e-12 && ball.vy.abs() <= 1e-12;
        if resting || tau > remaining || tau <= 1e-12 {
            let dt = remaining;
            if !resting {
                ball.y += ball.vy * dt + 0.5 * g * dt * dt;
                ball.vy += g * dt;
                if ball.y > floor {
                    ball.y = floor;
                }
            }
            ball.x += ball.vx * dt;
            break;
        }
        ball.x += ball.vx * tau;
        let impact_speed = ball.vy + g * tau;
        ball.y = floor;
        now += tau;
        remaining -= tau;
        if impact_speed * spec.restitution < REST_SPEED {
            ball.vy = 0.0;
        } else {
            ball.vy = -spec.restitution * impact_speed;
        }
        impacts.push(now);
    }
    // Side walls reflect without producing a sound.
    let w = spec.width as f64;
    if ball.x < r {
        ball.x = 2.0 * r - ball.x;
        ball.vx = -ball.vx;
    } else if ball.x > w - r {
        ball.x = 2.0 * (w - r) - ball.x;
        ball.vx = -ball.vx;
    }
    if ball.y < r {
        ball.y = 2.0 * r - ball.y;
        ball.vy = -ball.vy;
    }
}

/// Soft disc coverage in [0, 1] at the pixel center `(col + 0.5, row + 0.5)`.
fn disc_coverage(cx: f64, cy: f64, radius: f64, row: usize, col: usize) -> f64 {
    let dx = col as f64 + 0.5 - cx;
    let dy = row as f64 + 0.5 - cy;
    (radius + 0.5 - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0)
}

fn render_frame(spec: &ToySceneSpec, out: &mut Vec<f32>, intensity: impl Fn(usize, usize) -> f64) {
    for _ in 0..spec.channels {
        for row in 0..spec.height {
            for col in 0..spec.width {
                out.push((2.0 * intensity(row, col) - 1.0) as f32);
            }
        }
    }
}

fn bouncing_ball<R: Rng>(spec: &ToySceneSpec, rng: &mut R) -> Result<(PairedSample, ClipEvents)> {
    let mut ball = spec.initial.unwrap_or_else(|| random_ball(spec, rng));
    let frame_len = spec.channels * spec.height * spec.width;
    let mut video = Vec::with_capacity(spec.frames * frame_len);
    let mut impacts = Vec::new();
    for f in 0..spec.frames {
        if f > 0 {
            step_ball(spec, &mut ball, (f - 1) as f64, &mut impacts);
        }
        let (cx, cy) = (ball.x, ball.y);
        render_frame(spec, &mut video, |row, col| disc_coverage(cx, cy, spec.ball_radius, row, col));
    }

    let mut bounce_frames: Vec<usize> = Vec::new();
    let mut bounce_times = Vec::new();
    for &t in &impacts {
        let frame = t.round() as usize;
        if frame < spec.frames && bounce_frames.last() != Some(&frame) {
            bounce_frames.push(frame);
            bounce_times.push(t);
        }
    }

    let spf = spec.samples_per_frame;
    let mut audio = vec![0.0f32; spec.frames * spf];
    for &frame in &bounce_frames {
        let start = frame * spf;
        for i in 0..CLICK_LEN.min(spf) {
            audio[start + i] = (spec.click_amplitude * 0.5f64.powi(i as i32)) as f32;
        }
    }

    let video = ModalityTensor::video(video, spec.frames, spec.channels, spec.height, spec.width)?;
    let pair = PairedSample::new(ModalityTensor::audio(audio), video, Some(spec.kind.label()), spf)?;
    Ok((
        pair,
        ClipEvents {
            bounce_frames,
            bounce_times,
            brightness: Vec::new(),
        },
    ))
}

fn pulsing_light<R: Rng>(spec: &ToySceneSpec, rng: &mut R) -> Result<(PairedSample, ClipEvents)> {
    let period = rng.random_range(4.0..10.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let radius = spec.height.min(spec.width) as f64 / 4.0;
    let cx = rng.random_range(radius..=spec.width as f64 - radius);
    let cy = rng.random_range(radius..=spec.height as f64 - radius);
    let brightness: Vec<f64> = (0..spec.frames)
        .map(|f| 0.5 + 0.5 * (std::f64::consts::TAU * f as f64 / period + phase).sin())
        .collect();

    let frame_len = spec.channels * spec.height * spec.width;
    let mut video = Vec::with_capacity(spec.frames * frame_len);
    for &b in &brightness {
        render_frame(spec, &mut video, |row, col| b * disc_coverage(cx, cy, radius, row, col));
    }

    let spf = spec.samples_per_frame;
    let sr = spec.sample_rate();
    let audio: Vec<f32> = (0..spec.frames * spf)
        .map(|n| {
            let amp = spec.click_amplitude * brightness[n / spf];
            (amp * (std::f64::consts::TAU * spec.tone_hz * n as f64 / sr).sin()) as f32
        })
        .collect();

    let video = ModalityTensor::video(video, spec.frames, spec.channels, spec.height, spec.width)?;
    let pair = PairedSample::new(ModalityTensor::audio(audio), video, Some(spec.kind.label()), spf)?;
    Ok((
        pair,
        ClipEvents {
            bounce_frames: Vec::new(),
            bounce_times: Vec::new(),
            brightness,
        },
    ))
}
