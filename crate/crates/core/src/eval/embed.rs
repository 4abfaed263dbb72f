//! Deterministic hand-built feature extractors standing in for pretrained
//! audio and video embedding networks.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::{Modality, ModalityTensor};

/// Short-time transform window length (samples).
pub const STFT_WINDOW: usize = 64;
/// Hop between windows (samples).
pub const STFT_HOP: usize = 32;
/// Frequency bands; band `b` sums bins `4b+1 ..= 4b+4` (DC excluded).
pub const AUDIO_BANDS: usize = 8;
const BINS_PER_BAND: usize = STFT_WINDOW / 2 / AUDIO_BANDS;
/// Added to band power before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Side of the coarse spatial grid the video is pooled onto.
pub const VIDEO_GRID: usize = 4;
pub const VIDEO_FEATURES: usize = VIDEO_GRID * VIDEO_GRID + 4;
pub const AUDIO_FEATURES: usize = 2 * AUDIO_BANDS;

/// Per-window log band powers, `[window][band]`.
pub fn band_log_powers(a: &[f32]) -> Result<Vec<[f64; AUDIO_BANDS]>> {
    if a.len() < STFT_WINDOW {
        return Err(Error::dim("audio length for one STFT window", STFT_WINDOW, a.len()));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(STFT_WINDOW);
    let hann: Vec<f64> = (0..STFT_WINDOW)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / STFT_WINDOW as f64).cos())
        .collect();
    let windows = (a.len() - STFT_WINDOW) / STFT_HOP + 1;
    let mut out = Vec::with_capacity(windows);
    let mut buf = vec![Complex::new(0.0, 0.0); STFT_WINDOW];
    for w in 0..windows {
        let start = w * STFT_HOP;
        for i in 0..STFT_WINDOW {
            buf[i] = Complex::new(a[start + i] as f64 * hann[i], 0.0);
        }
        fft.process(&mut buf);
        let mut bands = [0.0; AUDIO_BANDS];
        for (b, band) in bands.iter_mut().enumerate() {
            let power: f64 = (1..=BINS_PER_BAND)
                .map(|k| buf[b * BINS_PER_BAND + k].norm_sqr())
                .sum::<f64>()
                / STFT_WINDOW as f64;
            *band = (power + LOG_FLOOR).ln();
        }
        out.push(bands);
    }
    Ok(out)
}

/// Mean then standard deviation over windows of each band's log power.
pub fn embed_audio(a: &ModalityTensor) -> Result<Vec<f64>> {
    if a.modality() != Modality::Audio {
        return Err(Error::Data("embed_audio expects an audio tensor".into()));
    }
    let frames = band_log_powers(a.data())?;
    let n = frames.len() as f64;
    let mut feats = vec![0.0; AUDIO_FEATURES];
    for b in 0..AUDIO_BANDS {
        let mean = frames.iter().map(|f| f[b]).sum::<f64>() / n;
        let var = frames.iter().map(|f| (f[b] - mean).powi(2)).sum::<f64>() / n;
        feats[b] = mean;
        feats[AUDIO_BANDS + b] = var.sqrt();
    }
    Ok(feats)
}

/// Mean squared first temporal difference per frame; frame 0 is 0.
pub fn frame_difference_energy(v: &ModalityTensor) -> Vec<f64> {
    let n = v.frame_len() as f64;
    (0..v.frames())
        .map(|f| {
            if f == 0 {
                return 0.0;
            }
            v.frame(f)
                .iter()
                .zip(v.frame(f - 1))
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Intensity-weighted centroid `(row, col)` of each frame, weighting pixels
/// by `max(0, (p + 1) / 2)` summed over channels. A frame with almost no
/// foreground keeps the previous centroid (the frame center for frame 0).
pub fn centroid_track(v: &ModalityTensor) -> Vec<(f64, f64)> {
    let shape = v.shape();
    let (channels, h, w) = (shape[1], shape[2], shape[3]);
    let mut prev = (h as f64 / 2.0, w as f64 / 2.0);
    (0..v.frames())
        .map(|f| {
            let frame = v.frame(f);
            let (mut mass, mut r, mut c) = (0.0, 0.0, 0.0);
            for ch in 0..channels {
                for row in 0..h {
                    for col in 0..w {
                        let wgt = ((frame[(ch * h + row) * w + col] as f64 + 1.0) / 2.0).max(0.0);
                        mass += wgt;
                        r += wgt * (row as f64 + 0.5);
                        c += wgt * (col as f64 + 0.5);
                    }
                }
            }
            if mass > 0.5 {
                prev = (r / mass, c / mass);
            }
            prev
        })
        .collect()
}

/// Per-frame motion energy: squared norm of the second temporal difference
/// of the intensity centroid, in pixels per frame squared. Peaks where the
/// motion changes abruptly, such as a bounce. The first and last frames have
/// no centered difference and repeat their neighbor's value.
pub fn motion_energy(v: &ModalityTensor) -> Vec<f64> {
    let c = centroid_track(v);
    let n = c.len();
    if n < 3 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|f| {
            let f = f.clamp(1, n - 2);
            let ar = c[f + 1].0 - 2.0 * c[f].0 + c[f - 1].0;
            let ac = c[f + 1].1 - 2.0 * c[f].1 + c[f - 1].1;
            ar * ar + ac * ac
        })
        .collect()
}

/// Coarse `VIDEO_GRID x VIDEO_GRID` intensity map averaged over frames and
/// channels, followed by mean/max first-difference energy and mean/max
/// motion energy.
pub fn embed_video(v: &ModalityTensor) -> Result<Vec<f64>> {
    if v.modality() != Modality::Video {
        return Err(Error::Data("embed_video expects a video tensor".into()));
    }
    let shape = v.shape();
    let (frames, channels, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if h < VIDEO_GRID || w < VIDEO_GRID || frames == 0 {
        return Err(Error::dim("video height/width", VIDEO_GRID, h.min(w)));
    }
    let mut grid = vec![0.0; VIDEO_GRID * VIDEO_GRID];
    let mut counts = vec![0usize; VIDEO_GRID * VIDEO_GRID];
    for f in 0..frames {
        let frame = v.frame(f);
        for c in 0..channels {
            for row in 0..h {
                for col in 0..w {
                    let cell = (row * VIDEO_GRID / h) * VIDEO_GRID + col * VIDEO_GRID / w;
                    grid[cell] += frame[(c * h + row) * w + col] as f64;
                    counts[cell] += 1;
                }
            }
        }
    }
    let mut feats: Vec<f64> = grid.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
    let diff = frame_difference_energy(v);
    let motion = motion_energy(v);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let max = |x: &[f64]| x.iter().cloned().fold(0.0, f64::max);
    feats.extend([mean(&diff), max(&diff), mean(&motion), max(&motion)]);
    Ok(feats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_sits_on_the_floor() {
        let f = embed_audio(&ModalityTensor::audio(vec![0.0; 2560])).unwrap();
        for b in 0..AUDIO_BANDS {
            assert!((f[b] - LOG_FLOOR.ln()).abs() < 1e-12);
            assert!(f[AUDIO_BANDS + b] < 1e-12);
        }
    }

    #[test]
    fn band_center_tone_wins_its_band() {
        let sr = 1280.0;
        let bin_hz = sr / STFT_WINDOW as f64;
        for band in 0..AUDIO_BANDS {
            let center_bin = (band * BINS_PER_BAND) as f64 + 0.5 + BINS_PER_BAND as f64 / 2.0;
            let hz = center_bin * bin_hz;
            let a: Vec<f32> = (0..2560)
                .map(|n| (0.5 * (std::f64::consts::TAU * hz * n as f64 / sr).sin()) as f32)
                .collect();
            let f = embed_audio(&ModalityTensor::audio(a)).unwrap();
            let argmax = (0..AUDIO_BANDS).max_by(|&i, &j| f[i].total_cmp(&f[j])).unwrap();
            assert_eq!(argmax, band, "tone at {hz} Hz");
        }
    }

    #[test]
    fn static_video_has_no_motion() {
        let frame: Vec<f32> = (0..64).map(|i| (i as f32 / 32.0) - 1.0).collect();
        let data: Vec<f32> = frame.iter().cycle().take(64 * 8).cloned().collect();
        let v = ModalityTensor::video(data, 8, 1, 8, 8).unwrap();
        let f = embed_video(&v).unwrap();
        assert_eq!(f.len(), VIDEO_FEATURES);
        assert_eq!(&f[VIDEO_GRID * VIDEO_GRID..], &[0.0; 4]);
        assert!(motion_energy(&v).iter().all(|m| *m == 0.0));
    }

    #[test]
    fn wrong_modality() {
        assert!(embed_video(&ModalityTensor::audio(vec![0.0; 128])).is_err());
        assert!(embed_audio(&ModalityTensor::audio(vec![0.0; 10])).is_err());
    }
}
