//! Coupled audio-video diffusion.
//!
//! Both modalities are noised with one schedule at one shared timestep. Each
//! is denoised frame by frame with weights shared across frames: the video
//! network sees a noisy frame, its two neighbours and the pooled audio
//! features of that frame; the audio network sees one frame-aligned block of
//! samples and the pooled video features of frames `f-1, f, f+1`. Pooling
//! windows are offset by a shift that is drawn at random during training and
//! fixed to 0 when sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::diffusion::{cfg_combine, posterior_step, q_sample_slice};
use crate::error::{Error, Result};
use crate::eval::{frame_difference_energy, motion_energy};
use crate::netcore::{FrameNet, FrameNetConfig, Reduction};
use crate::rng::normal_vec;
use crate::schedule::NoiseSchedule;
use crate::tensor::{Modality, ModalityTensor};

/// Per-frame video features: mean intensity, the mean of every pixel row
/// (top to bottom, averaged over channels and columns), first-difference
/// energy and `ln(1 + motion energy)`.
pub fn video_feature_dim(height: usize) -> usize {
    3 + height
}

/// Features extracted per audio block: mean, RMS and peak magnitude.
pub const AUDIO_FRAME_FEATURES: usize = 3;

pub fn video_frame_features(v: &ModalityTensor) -> Vec<Vec<f64>> {
    let diff = frame_difference_energy(v);
    let motion = motion_energy(v);
    let shape = v.shape();
    let (channels, height, width) = (shape[1], shape[2], shape[3]);
    (0..v.frames())
        .map(|f| {
            let frame = v.frame(f);
            let mean = frame.iter().map(|&p| p as f64).sum::<f64>() / frame.len() as f64;
            let mut feats = Vec::with_capacity(video_feature_dim(height));
            feats.push(mean);
            for r in 0..height {
                let mut acc = 0.0;
                for c in 0..channels {
                    let row = (c * height + r) * width;
                    acc += frame[row..row + width].iter().map(|&p| p as f64).sum::<f64>();
                }
                feats.push(acc / (channels * width) as f64);
            }
            feats.push(diff[f]);
            feats.push(motion[f].ln_1p());
            feats
        })
        .collect()
}

pub fn audio_frame_features(audio: &[f32], samples_per_frame: usize) -> Vec<Vec<f64>> {
    audio
        .chunks_exact(samples_per_frame)
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().map(|&a| a as f64).sum::<f64>() / n;
            let rms = (c.iter().map(|&a| (a as f64).powi(2)).sum::<f64>() / n).sqrt();
            let peak = c.iter().fold(0.0f64, |m, &a| m.max((a as f64).abs()));
            vec![mean, rms, peak]
        })
        .collect()
}

/// Sliding mean over a circular window of per-frame features. Output frame
/// `f` averages frames `(f + j - shift) mod F` for `j in 0..window`, so the
/// window always contains `f` itself when `shift < window`.
pub fn shift_pool(features: &[Vec<f64>], window: usize, shift: usize) -> Result<Vec<Vec<f64>>> {
    let frames = features.len();
    if window == 0 || window > frames {
        return Err(Error::param(format!(
            "pooling window {window} must lie in 1..={frames}"
        )));
    }
    if shift >= window {
        return Err(Error::param(format!("shift {shift} must be below the window {window}")));
    }
    let k = features[0].len();
    Ok((0..frames)
        .map(|f| {
            let mut acc = vec![0.0; k];
            for j in 0..window {
                let src = (f + frames + j - shift) % frames;
                for (a, v) in acc.iter_mut().zip(&features[src]) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / window as f64).collect()
        })
        .collect())
}

/// Pooled per-frame features of `src`, flattened frame-major. Audio sources
/// need `samples_per_frame` to find frame boundaries.
pub fn random_shift_pool(src: &ModalityTensor, samples_per_frame: usize, window: usize, shift: usize) -> Result<Vec<f64>> {
    let feats = match src.modality() {
        Modality::Video => video_frame_features(src),
        Modality::Audio => {
            if samples_per_frame == 0 || src.len() % samples_per_frame != 0 {
                return Err(Error::param("audio length must be a multiple of samples_per_frame"));
            }
            audio_frame_features(src.data(), samples_per_frame)
        }
        Modality::Generic => return Err(Error::param("cannot pool a generic tensor")),
    };
    Ok(shift_pool(&feats, window, shift)?.concat())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointConfig {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples_per_frame: usize,
    pub cross_window: usize,
    pub num_classes: usize,
    pub time_embed_dim: usize,
    pub video_hidden: Vec<usize>,
    pub audio_hidden: Vec<usize>,
    pub experts: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            channels: 1,
            height: 16,
            width: 16,
            samples_per_frame: 160,
            cross_window: 2,
            num_classes: 2,
            time_embed_dim: 16,
            video_hidden: vec![128, 128],
            audio_hidden: vec![128, 128],
            experts: 1,
        }
    }
}

impl JointConfig {
    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn video_len(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn audio_len(&self) -> usize {
        self.frames * self.samples_per_frame
    }

    /// Pooled video features of frames `f-1, f, f+1` go to audio block `f`.
    pub fn audio_cross_dim(&self) -> usize {
        3 * video_feature_dim(self.height)
    }

    pub fn video_net_config(&self) -> FrameNetConfig {
        FrameNetConfig {
            time_embed_dim: self.time_embed_dim,
            experts: self.experts,
            ..FrameNetConfig::new(self.frame_len(), 1, AUDIO_FRAME_FEATURES, self.num_classes, self.video_hidden.clone())
        }
    }

    pub fn audio_net_config(&self) -> FrameNetConfig {
        FrameNetConfig {
            time_embed_dim: self.time_embed_dim,
            experts: self.experts,
            ..FrameNetConfig::new(self.samples_per_frame, 0, self.audio_cross_dim(), self.num_classes, self.audio_hidden.clone())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_len() == 0 || self.samples_per_frame == 0 {
            return Err(Error::param("joint shapes must be non-empty"));
        }
        if self.cross_window == 0 || self.cross_window > self.frames {
            return Err(Error::param(format!(
                "cross_window {} must lie in 1..={}",
                self.cross_window, self.frames
            )));
        }
        Ok(())
    }
}

/// One-hot class vector; `None` (or the null token) is all zeros.
pub fn class_onehot(label: Option<u32>, num_classes: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; num_classes];
    if let Some(l) = label {
        let slot = v
            .get_mut(l as usize)
            .ok_or_else(|| Error::param(format!("class {l} out of range (have {num_classes})")))?;
        *slot = 1.0;
    }
    Ok(v)
}

/// Noisy audio and video at one shared timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPair {
    pub audio: ModalityTensor,
    pub video: ModalityTensor,
    t: usize,
}

impl NoisyPair {
    /// Rejects states whose modalities sit at different timesteps.
    pub fn from_parts(audio: ModalityTensor, audio_t: usize, video: ModalityTensor, video_t: usize) -> Result<Self> {
        if audio_t != video_t {
            return Err(Error::Synchronization { audio_t, video_t });
        }
        Ok(Self {
            audio,
            video,
            t: audio_t,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }
}

/// Noises both modalities with the same schedule at the same `t`.
pub fn joint_q_sample(pair: &PairedSample, t: usize, eps_a: &ModalityTensor, eps_v: &ModalityTensor, s: &NoiseSchedule) -> Result<NoisyPair> {
    pair.audio.ensure_same_shape(eps_a, "audio noise")?;
    pair.video.ensure_same_shape(eps_v, "video noise")?;
    let a = q_sample_slice(&pair.audio.to_f64(), t, &eps_a.to_f64(), s)?;
    let v = q_sample_slice(&pair.video.to_f64(), t, &eps_v.to_f64(), s)?;
    Ok(NoisyPair {
        audio: pair.audio.like_from_f64(&a)?,
        video: pair.video.like_from_f64(&v)?,
        t,
    })
}

/// Loss of one training example: `λ(t) (MSE_audio + MSE_video)` with λ ≡ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub loss: f64,
    pub audio_loss: f64,
    pub video_loss: f64,
    /// Gradient over `[video params, audio params]`.
    pub grad: Vec<f64>,
}

/// Cross-modal conditioning computed from the current noisy states, one
/// vector per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossConditions {
    /// Pooled audio features, fed to the video network.
    pub for_video: Vec<Vec<f64>>,
    /// Pooled video features of the frame and its neighbours, fed to the
    /// audio network.
    pub for_audio: Vec<Vec<f64>>,
}

impl CrossConditions {
    pub fn zeros(cfg: &JointConfig) -> Self {
        Self {
            for_video: vec![vec![0.0; AUDIO_FRAME_FEATURES]; cfg.frames],
            for_audio: vec![vec![0.0; cfg.audio_cross_dim()]; cfg.frames],
        }
    }
}

/// Options of the joint reverse chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSampling {
    /// Replace the cross-modal conditioning with zeros (ablation).
    pub ablate_cross: bool,
    /// Classifier-free guidance scale applied to both modalities; 1 is
    /// plain conditional sampling.
    pub guidance: f64,
    /// Scale of the extrapolation from zeroed to actual cross-modal
    /// conditioning; 1 leaves the prediction unchanged.
    pub cross_guidance: f64,
}

impl Default for JointSampling {
    fn default() -> Self {
        Self {
            ablate_cross: false,
            guidance: 1.0,
            cross_guidance: 1.0,
        }
    }
}

impl JointSampling {
    fn check(&self, class: Option<u32>) -> Result<()> {
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::param(format!("guidance {} must be finite and >= 0", self.guidance)));
        }
        if !(self.cross_guidance >= 0.0 && self.cross_guidance.is_finite()) {
            return Err(Error::param(format!("cross guidance {} must be finite and >= 0", self.cross_guidance)));
        }
        if class.is_none() && self.guidance != 1.0 {
            return Err(Error::Configuration("guidance needs a class".into()));
        }
        Ok(())
    }
}

/// Pooled video features of `f-1, f, f+1` (clamped) for every frame.
pub fn with_neighbours(pooled: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = pooled.len();
    (0..n)
        .map(|f| [pooled[f.saturating_sub(1)].as_slice(), &pooled[f], &pooled[(f + 1).min(n - 1)]].concat())
        .collect()
}

/// Two cross-conditioned denoisers trained as one parameter vector
/// (video parameters first).
#[derive(Debug, Clone)]
pub struct JointDenoiser {
    config: JointConfig,
    pub video_net: FrameNet,
    pub audio_net: FrameNet,
}

impl JointDenoiser {
    pub fn new(config: JointConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            video_net: FrameNet::new(config.video_net_config(), seed)?,
            audio_net: FrameNet::new(config.audio_net_config(), seed.wrapping_add(1))?,
            config,
        })
    }

    pub fn zeros(config: JointConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            video_net: FrameNet::zeros(config.video_net_config())?,
            audio_net: FrameNet::zeros(config.audio_net_config())?,
            config,
        })
    }

    pub fn config(&self) -> &JointConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.video_net.param_count() + self.audio_net.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        [self.video_net.net.params(), self.audio_net.net.params()].concat()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("joint parameter vector", self.param_count(), params.len()));
        }
        let split = self.video_net.param_count();
        self.video_net.net.set_params(params[..split].to_vec())?;
        self.audio_net.net.set_params(params[split..].to_vec())?;
        Ok(())
    }

    fn check_shapes(&self, audio: &ModalityTensor, video: &ModalityTensor) -> Result<()> {
        if audio.len() != self.config.audio_len() {
            return Err(Error::dim("joint audio length", self.config.audio_len(), audio.len()));
        }
        if video.len() != self.config.video_len() {
            return Err(Error::dim("joint video length", self.config.video_len(), video.len()));
        }
        Ok(())
    }

    /// Audio-side conditioning from a (noisy) video alone.
    pub fn video_to_audio_conditions(&self, video: &ModalityTensor, shift: usize) -> Result<Vec<Vec<f64>>> {
        Ok(with_neighbours(&shift_pool(&video_frame_features(video), self.config.cross_window, shift)?))
    }

    pub fn cross_conditions(&self, audio: &ModalityTensor, video: &ModalityTensor, shift: usize) -> Result<CrossConditions> {
        self.check_shapes(audio, video)?;
        let spf = self.config.samples_per_frame;
        let w = self.config.cross_window;
        Ok(CrossConditions {
            for_video: shift_pool(&audio_frame_features(audio.data(), spf), w, shift)?,
            for_audio: self.video_to_audio_conditions(video, shift)?,
        })
    }

    /// Noise predictions `(ε̂_audio, ε̂_video)` for a noisy state.
    pub fn predict(&self, audio: &[f64], video: &[f64], t: usize, cross: &CrossConditions, class: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let time = t as f64;
        let eps_v = self.video_net.forward_clip(video, time, &cross.for_video, class)?;
        let eps_a = self.audio_net.forward_clip(audio, time, &cross.for_audio, class)?;
        Ok((eps_a, eps_v))
    }

    /// ε-MSE of both modalities at `t` and the gradient over all parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn joint_loss(
        &self,
        pair: &PairedSample,
        t: usize,
        eps_a: &ModalityTensor,
        eps_v: &ModalityTensor,
        s: &NoiseSchedule,
        class: Option<u32>,
        shift: usize,
    ) -> Result<JointLoss> {
        self.joint_loss_with(pair, t, eps_a, eps_v, s, class, Some(shift))
    }

    /// [`joint_loss`](Self::joint_loss) where `shift: None` trains with the
    /// cross-modal conditioning zeroed, as used for cross guidance.
    #[allow(clippy::too_many_arguments)]
    pub fn joint_loss_with(
        &self,
        pair: &PairedSample,
        t: usize,
        eps_a: &ModalityTensor,
        eps_v: &ModalityTensor,
        s: &NoiseSchedule,
        class: Option<u32>,
        shift: Option<usize>,
    ) -> Result<JointLoss> {
        let noisy = joint_q_sample(pair, t, eps_a, eps_v, s)?;
        let cross = match shift {
            Some(shift) => self.cross_conditions(&noisy.audio, &noisy.video, shift)?,
            None => CrossConditions::zeros(&self.config),
        };
        let class = class_onehot(class, self.config.num_classes)?;
        let time = t as f64;
        let mut grad = vec![0.0; self.param_count()];
        let split = self.video_net.param_count();
        let (gv, ga) = grad.split_at_mut(split);
        let video_loss = self.video_net.loss_into(
            &noisy.video.to_f64(),
            time,
            &cross.for_video,
            &class,
            &eps_v.to_f64(),
            Reduction::Mean,
            gv,
        )?;
        let audio_loss = self.audio_net.loss_into(
            &noisy.audio.to_f64(),
            time,
            &cross.for_audio,
            &class,
            &eps_a.to_f64(),
            Reduction::Mean,
            ga,
        )?;
        Ok(JointLoss {
            loss: audio_loss + video_loss,
            audio_loss,
            video_loss,
            grad,
        })
    }

    /// Reverse step of both modalities from `t` to `t - 1`; each side is
    /// conditioned on the other's current noisy state.
    pub fn joint_p_sample<R: Rng + ?Sized>(&self, state: &NoisyPair, s: &NoiseSchedule, class: Option<u32>, rng: &mut R) -> Result<NoisyPair> {
        self.p_sample_with(state, s, class, JointSampling::default(), rng)
    }

    /// Noise predictions with class guidance and cross guidance applied to
    /// both modalities.
    fn guided_predict(&self, a: &[f64], v: &[f64], t: usize, cross: &CrossConditions, class: Option<u32>, opts: JointSampling) -> Result<(Vec<f64>, Vec<f64>)> {
        let cond = class_onehot(class, self.config.num_classes)?;
        let (mut eps_a, mut eps_v) = self.predict(a, v, t, cross, &cond)?;
        if opts.cross_guidance != 1.0 {
            let (ua, uv) = self.predict(a, v, t, &CrossConditions::zeros(&self.config), &cond)?;
            eps_a = cfg_combine(&ua, &eps_a, opts.cross_guidance);
            eps_v = cfg_combine(&uv, &eps_v, opts.cross_guidance);
        }
        if opts.guidance != 1.0 {
            let null = class_onehot(None, self.config.num_classes)?;
            let (ua, uv) = self.predict(a, v, t, cross, &null)?;
            eps_a = cfg_combine(&ua, &eps_a, opts.guidance);
            eps_v = cfg_combine(&uv, &eps_v, opts.guidance);
        }
        Ok((eps_a, eps_v))
    }

    /// As [`joint_p_sample`](Self::joint_p_sample) with sampling options.
    pub fn p_sample_with<R: Rng + ?Sized>(&self, state: &NoisyPair, s: &NoiseSchedule, class: Option<u32>, opts: JointSampling, rng: &mut R) -> Result<NoisyPair> {
        let t = state.t;
        s.check_t(t)?;
        opts.check(class)?;
        let cross = if opts.ablate_cross {
            CrossConditions::zeros(&self.config)
        } else {
            self.cross_conditions(&state.audio, &state.video, 0)?
        };
        let a = state.audio.to_f64();
        let v = state.video.to_f64();
        let (eps_a, eps_v) = self.guided_predict(&a, &v, t, &cross, class, opts)?;
        let (za, zv) = if t > 1 {
            (Some(normal_vec(rng, a.len())), Some(normal_vec(rng, v.len())))
        } else {
            (None, None)
        };
        let a_prev = posterior_step(s, t, &a, &eps_a, za.as_deref())?;
        let v_prev = posterior_step(s, t, &v, &eps_v, zv.as_deref())?;
        Ok(NoisyPair {
            audio: state.audio.like_from_f64(&a_prev)?,
            video: state.video.like_from_f64(&v_prev)?,
            t: t - 1,
        })
    }

    fn initial_state<R: Rng + ?Sized>(&self, s: &NoiseSchedule, rng: &mut R) -> Result<NoisyPair> {
        let c = &self.config;
        let a = normal_vec(rng, c.audio_len());
        let v = normal_vec(rng, c.video_len());
        let audio = ModalityTensor::audio(a.iter().map(|&x| x as f32).collect());
        let video = ModalityTensor::video(v.iter().map(|&x| x as f32).collect(), c.frames, c.channels, c.height, c.width)?;
        Ok(NoisyPair {
            audio,
            video,
            t: s.len(),
        })
    }

    /// Full reverse chain from Gaussian noise.
    pub fn sample<R: Rng + ?Sized>(&self, s: &NoiseSchedule, class: Option<u32>, rng: &mut R) -> Result<PairedSample> {
        self.sample_with(s, class, JointSampling::default(), rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, s: &NoiseSchedule, class: Option<u32>, opts: JointSampling, rng: &mut R) -> Result<PairedSample> {
        opts.check(class)?;
        let mut state = self.initial_state(s, rng)?;
        while state.t > 0 {
            state = self.p_sample_with(&state, s, class, opts, rng)?;
        }
        PairedSample::new(state.audio, state.video, class, self.config.samples_per_frame)
    }

    /// Generates audio for a fixed clean video. At each step the video side
    /// of the conditioning is the video noised to the current `t` with one
    /// fixed noise draw; only the audio is denoised.
    pub fn sample_audio_for_video<R: Rng + ?Sized>(
        &self,
        video: &ModalityTensor,
        s: &NoiseSchedule,
        class: Option<u32>,
        guidance: f64,
        rng: &mut R,
    ) -> Result<ModalityTensor> {
        let c = &self.config;
        if video.len() != c.video_len() {
            return Err(Error::dim("video length", c.video_len(), video.len()));
        }
        JointSampling { guidance, ..Default::default() }.check(class)?;
        let v0 = video.to_f64();
        let eps_v = normal_vec(rng, v0.len());
        let class_vec = class_onehot(class, c.num_classes)?;
        let null = class_onehot(None, c.num_classes)?;
        let mut a = normal_vec(rng, c.audio_len());
        for t in (1..=s.len()).rev() {
            let vt = video.like_from_f64(&q_sample_slice(&v0, t, &eps_v, s)?)?;
            let cond = self.video_to_audio_conditions(&vt, 0)?;
            let mut eps_a = self.audio_net.forward_clip(&a, t as f64, &cond, &class_vec)?;
            if guidance != 1.0 {
                let u = self.audio_net.forward_clip(&a, t as f64, &cond, &null)?;
                eps_a = cfg_combine(&u, &eps_a, guidance);
            }
            let z = (t > 1).then(|| normal_vec(rng, a.len()));
            a = posterior_step(s, t, &a, &eps_a, z.as_deref())?;
        }
        Ok(ModalityTensor::audio(a.iter().map(|&x| x as f32).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    pub(crate) fn tiny_config() -> JointConfig {
        JointConfig {
            frames: 4,
            channels: 1,
            height: 2,
            width: 2,
            samples_per_frame: 3,
            cross_window: 2,
            num_classes: 2,
            time_embed_dim: 4,
            video_hidden: vec![4],
            audio_hidden: vec![4],
            experts: 1,
        }
    }

    fn tiny_pair(seed: u64) -> PairedSample {
        let mut rng = stream_rng(seed, 9);
        let a = normal_vec(&mut rng, 12).iter().map(|&x| x as f32).collect();
        let v = normal_vec(&mut rng, 16).iter().map(|&x| x as f32).collect();
        PairedSample::new(ModalityTensor::audio(a), ModalityTensor::video(v, 4, 1, 2, 2).unwrap(), Some(1), 3).unwrap()
    }

    #[test]
    fn constant_features_pool_to_themselves() {
        let feats = vec![vec![0.25, -1.0]; 6];
        for w in 1..=6 {
            for s in 0..w {
                assert_eq!(shift_pool(&feats, w, s).unwrap(), feats);
            }
        }
        let v = ModalityTensor::video(vec![0.5; 6 * 4], 6, 1, 2, 2).unwrap();
        let pooled = random_shift_pool(&v, 0, 3, 2).unwrap();
        assert!(pooled.chunks(video_feature_dim(2)).all(|c| c == [0.5, 0.5, 0.5, 0.0, 0.0]));
    }

    #[test]
    fn full_window_is_global_mean() {
        let feats: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let pooled = shift_pool(&feats, 5, 0).unwrap();
        assert!(pooled.iter().all(|p| (p[0] - 2.0).abs() < 1e-15));
    }

    #[test]
    fn impulse_coverage_scan() {
        let frames = 8;
        for window in 1..=frames {
            for shift in 0..window {
                for k in 0..frames {
                    let feats: Vec<Vec<f64>> = (0..frames).map(|f| vec![if f == k { 1.0 } else { 0.0 }]).collect();
                    let pooled = shift_pool(&feats, window, shift).unwrap();
                    for f in 0..frames {
                        let covered = (0..window).any(|j| (f + frames + j - shift) % frames == k);
                        assert_eq!(pooled[f][0] != 0.0, covered, "w={window} s={shift} k={k} f={f}");
                    }
                }
            }
        }
    }

    #[test]
    fn pool_parameter_errors() {
        let feats = vec![vec![0.0]; 4];
        assert!(matches!(shift_pool(&feats, 5, 0), Err(Error::Parameter(_))));
        assert!(matches!(shift_pool(&feats, 2, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_noise_scales_both_modalities_equally() {
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let pair = tiny_pair(0);
        let za = ModalityTensor::audio(vec![0.0; 12]);
        let zv = ModalityTensor::video(vec![0.0; 16], 4, 1, 2, 2).unwrap();
        for t in 1..=20 {
            let n = joint_q_sample(&pair, t, &za, &zv, &s).unwrap();
            let c = s.coeffs_at(t).unwrap().sqrt_alpha_bar;
            for (o, x) in n.audio.data().iter().zip(pair.audio.data()) {
                assert_eq!(*o, (c * *x as f64) as f32);
            }
            for (o, x) in n.video.data().iter().zip(pair.video.data()) {
                assert_eq!(*o, (c * *x as f64) as f32);
            }
        }
    }

    #[test]
    fn desynchronized_state_is_rejected() {
        let pair = tiny_pair(0);
        let r = NoisyPair::from_parts(pair.audio.clone(), 5, pair.video.clone(), 6);
        assert!(matches!(r, Err(Error::Synchronization { audio_t: 5, video_t: 6 })));
        assert_eq!(NoisyPair::from_parts(pair.audio, 4, pair.video, 4).unwrap().t(), 4);
    }

    #[test]
    fn sampling_options() {
        let mut jd = JointDenoiser::zeros(tiny_config()).unwrap();
        let p: Vec<f64> = (0..jd.params().len()).map(|i| ((i * 7919) % 13) as f64 / 40.0 - 0.15).collect();
        jd.set_params(&p).unwrap();
        let s = NoiseSchedule::linear(10, 1e-3, 0.1).unwrap();
        let plain = jd.sample(&s, Some(1), &mut stream_rng(4, 0)).unwrap();
        let unit = JointSampling::default();
        assert_eq!(jd.sample_with(&s, Some(1), unit, &mut stream_rng(4, 0)).unwrap(), plain);
        let crossed = JointSampling { cross_guidance: 3.0, ..unit };
        assert_ne!(jd.sample_with(&s, Some(1), crossed, &mut stream_rng(4, 0)).unwrap(), plain);
        let guided = JointSampling { guidance: 2.0, ..unit };
        assert!(matches!(jd.sample_with(&s, None, guided, &mut stream_rng(4, 0)), Err(Error::Configuration(_))));
        for bad in [JointSampling { guidance: -1.0, ..unit }, JointSampling { cross_guidance: f64::NAN, ..unit }] {
            assert!(matches!(jd.sample_with(&s, Some(0), bad, &mut stream_rng(4, 0)), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn dropped_cross_matches_zero_conditions() {
        let mut jd = JointDenoiser::zeros(tiny_config()).unwrap();
        let p: Vec<f64> = (0..jd.params().len()).map(|i| ((i * 31) % 11) as f64 / 30.0 - 0.2).collect();
        jd.set_params(&p).unwrap();
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let pair = tiny_pair(3);
        let ea = ModalityTensor::audio(vec![0.3; 12]);
        let ev = ModalityTensor::video(vec![-0.2; 16], 4, 1, 2, 2).unwrap();
        let with = jd.joint_loss(&pair, 5, &ea, &ev, &s, Some(1), 0).unwrap();
        let without = jd.joint_loss_with(&pair, 5, &ea, &ev, &s, Some(1), None).unwrap();
        assert_ne!(with.loss, without.loss);
        assert_eq!(jd.joint_loss_with(&pair, 5, &ea, &ev, &s, Some(1), Some(0)).unwrap().loss, with.loss);
    }

    #[test]
    fn zero_nets_zero_noise_zero_loss() {
        let jd = JointDenoiser::zeros(tiny_config()).unwrap();
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let pair = tiny_pair(1);
        let za = ModalityTensor::audio(vec![0.0; 12]);
        let zv = ModalityTensor::video(vec![0.0; 16], 4, 1, 2, 2).unwrap();
        let l = jd.joint_loss(&pair, 7, &za, &zv, &s, Some(0), 1).unwrap();
        assert_eq!(l.loss, 0.0);
    }

    #[test]
    fn zero_nets_last_step_rescales() {
        let jd = JointDenoiser::zeros(tiny_config()).unwrap();
        let s = NoiseSchedule::linear(20, 1e-3, 0.1).unwrap();
        let pair = tiny_pair(2);
        let state = NoisyPair::from_parts(pair.audio.clone(), 1, pair.video.clone(), 1).unwrap();
        let next = jd.joint_p_sample(&state, &s, None, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(next.t(), 0);
        let a1 = s.alpha(1).unwrap().sqrt();
        for (o, x) in next.audio.data().iter().zip(pair.audio.data()) {
            assert_eq!(*o, (*x as f64 / a1) as f32);
        }
        for (o, x) in next.video.data().iter().zip(pair.video.data()) {
            assert_eq!(*o, (*x as f64 / a1) as f32);
        }
    }

    #[test]
    fn seeded_chain_is_reproducible() {
        let jd = JointDenoiser::new(tiny_config(), 4).unwrap();
        let s = NoiseSchedule::linear(10, 1e-3, 0.2).unwrap();
        let a = jd.sample(&s, Some(1), &mut stream_rng(5, 0)).unwrap();
        let b = jd.sample(&s, Some(1), &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
    }
}
