//! Evaluation: Gaussian statistics, PSD square root, Fréchet distance,
//! embedding extractors and the audio-video synchronization score.

mod embed;
mod linalg;
mod stats;
mod sync;

pub use embed::{
    band_log_powers, centroid_track, embed_audio, embed_video, frame_difference_energy, motion_energy, AUDIO_BANDS, AUDIO_FEATURES,
    LOG_FLOOR, STFT_HOP, STFT_WINDOW, VIDEO_FEATURES, VIDEO_GRID,
};
pub use linalg::{jacobi_eigen, matrix_sqrt_psd, psd_eigen, Matrix, SymEigen, CLAMP_REL, JACOBI_TOL, NOT_PSD_REL};
pub use stats::{frechet_distance, gaussian_stats, GaussianStats};
pub use sync::{audio_envelope, lagged_correlation, matched_and_shuffled, median, pearson, sync_score, SyncScore, SYNC_MAX_LAG};

use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::Result;

/// Report emitted when comparing a generated corpus against a real one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fad: f64,
    pub fvd: f64,
    pub sync_matched: f64,
    pub sync_shuffled: f64,
    pub n: usize,
}

/// Fréchet distances over audio and video embeddings plus the median sync
/// score of the generated pairs, matched and shuffled.
pub fn evaluate(real: &[PairedSample], generated: &[PairedSample]) -> Result<EvalReport> {
    let embed_all = |pairs: &[PairedSample]| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let audio = pairs.iter().map(|p| embed_audio(&p.audio)).collect::<Result<Vec<_>>>()?;
        let video = pairs.iter().map(|p| embed_video(&p.video)).collect::<Result<Vec<_>>>()?;
        Ok((audio, video))
    };
    let (ra, rv) = embed_all(real)?;
    let (ga, gv) = embed_all(generated)?;
    let fad = frechet_distance(&gaussian_stats(&ra)?, &gaussian_stats(&ga)?)?;
    let fvd = frechet_distance(&gaussian_stats(&rv)?, &gaussian_stats(&gv)?)?;
    let (matched, shuffled) = matched_and_shuffled(generated)?;
    Ok(EvalReport {
        fad,
        fvd,
        sync_matched: median(&matched),
        sync_shuffled: median(&shuffled),
        n: generated.len(),
    })
}
