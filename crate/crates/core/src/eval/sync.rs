use serde::{Deserialize, Serialize};

use super::embed::motion_energy;
use crate::data::PairedSample;
use crate::error::{Error, Result};

/// Largest lag, in frames, searched by [`sync_score`].
pub const SYNC_MAX_LAG: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncScore {
    /// Peak normalized cross-correlation in [-1, 1].
    pub score: f64,
    /// Lag of the peak in frames; positive when audio trails video.
    pub lag: i64,
}

/// RMS of each frame's block of audio samples.
pub fn audio_envelope(audio: &[f32], samples_per_frame: usize) -> Vec<f64> {
    audio
        .chunks_exact(samples_per_frame)
        .map(|c| (c.iter().map(|&a| (a as f64).powi(2)).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let denom = (va * vb).sqrt();
    if denom <= 1e-300 || va <= 1e-24 * n as f64 || vb <= 1e-24 * n as f64 {
        return 0.0;
    }
    (cov / denom).clamp(-1.0, 1.0)
}

/// Correlation of `video[f]` with `audio[f + lag]` over the overlap.
pub fn lagged_correlation(video: &[f64], audio: &[f64], lag: i64) -> f64 {
    let n = video.len().min(audio.len()) as i64;
    let (v0, a0) = if lag >= 0 { (0, lag) } else { (-lag, 0) };
    let len = n - lag.abs();
    if len < 2 {
        return 0.0;
    }
    let v = &video[v0 as usize..(v0 + len) as usize];
    let a = &audio[a0 as usize..(a0 + len) as usize];
    pearson(v, a)
}

/// Peak normalized cross-correlation between per-frame video motion energy
/// and the per-frame audio envelope over lags `-SYNC_MAX_LAG..=SYNC_MAX_LAG`.
/// Ties go to the smaller absolute lag. Constant signals score 0 at lag 0.
pub fn sync_score(pair: &PairedSample) -> Result<SyncScore> {
    let motion = motion_energy(&pair.video);
    let env = audio_envelope(pair.audio.data(), pair.samples_per_frame);
    if motion.len() != env.len() {
        return Err(Error::dim("audio envelope frames", motion.len(), env.len()));
    }
    let max_lag = SYNC_MAX_LAG.min(motion.len().saturating_sub(2)) as i64;
    let mut best = SyncScore { score: 0.0, lag: 0 };
    let mut first = true;
    let mut lags: Vec<i64> = (-max_lag..=max_lag).collect();
    lags.sort_by_key(|l| (l.abs(), *l));
    for lag in lags {
        let r = lagged_correlation(&motion, &env, lag);
        if first || r > best.score {
            best = SyncScore { score: r, lag };
            first = false;
        }
    }
    Ok(best)
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Matched-pair sync scores and scores after pairing each video with the
/// next pair's audio (a cyclic derangement).
pub fn matched_and_shuffled(pairs: &[PairedSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let matched = pairs
        .iter()
        .map(|p| sync_score(p).map(|s| s.score))
        .collect::<Result<Vec<_>>>()?;
    if pairs.len() < 2 {
        return Ok((matched, Vec::new()));
    }
    let shuffled = (0..pairs.len())
        .map(|i| {
            let other = &pairs[(i + 1) % pairs.len()];
            let p = PairedSample::new(other.audio.clone(), pairs[i].video.clone(), None, pairs[i].samples_per_frame)?;
            sync_score(&p).map(|s| s.score)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((matched, shuffled))
}
