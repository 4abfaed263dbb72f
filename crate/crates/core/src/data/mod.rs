//! Synthetic paired audio-video corpus: scene simulation, clip segmentation
//! and the on-disk tensor, pair and manifest formats.

mod io;
mod manifest;
mod scene;

pub use io::{read_pair, read_tensor, read_tensor_from, write_pair, write_tensor, write_tensor_to, TensorHeader, PAIR_MAGIC, TENSOR_MAGIC};
pub use manifest::{generate_dataset, ClipEntry, DataConfig, DatasetManifest, ManifestShapes, MANIFEST_VERSION};
pub use scene::{generate_clip, BallState, ClipEvents, SceneKind, ToySceneSpec, CLICK_LEN};

use crate::error::{Error, Result};
use crate::tensor::{Modality, ModalityTensor};

/// Aligned audio and video with an optional class label.
///
/// The audio holds exactly `samples_per_frame` samples per video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub audio: ModalityTensor,
    pub video: ModalityTensor,
    pub cond_label: Option<u32>,
    pub samples_per_frame: usize,
}

impl PairedSample {
    pub fn new(audio: ModalityTensor, video: ModalityTensor, cond_label: Option<u32>, samples_per_frame: usize) -> Result<Self> {
        if audio.modality() != Modality::Audio {
            return Err(Error::Data("audio tensor has the wrong modality".into()));
        }
        if video.modality() != Modality::Video {
            return Err(Error::Data("video tensor has the wrong modality".into()));
        }
        let expected = video.frames() * samples_per_frame;
        if audio.len() != expected {
            return Err(Error::dim("audio length (frames x samples_per_frame)", expected, audio.len()));
        }
        Ok(Self {
            audio,
            video,
            cond_label,
            samples_per_frame,
        })
    }

    pub fn frames(&self) -> usize {
        self.video.frames()
    }
}

/// Cuts a long pair into consecutive non-overlapping clips of `clip_frames`
/// frames. A trailing remainder shorter than a clip is dropped, so an input
/// shorter than one clip yields an empty list.
pub fn segment_clips(long: &PairedSample, clip_frames: usize) -> Result<Vec<PairedSample>> {
    if clip_frames == 0 {
        return Err(Error::param("clip_frames must be positive"));
    }
    let frame_len = long.video.frame_len();
    let spf = long.samples_per_frame;
    let vshape = long.video.shape();
    (0..long.frames() / clip_frames)
        .map(|k| {
            let v0 = k * clip_frames * frame_len;
            let a0 = k * clip_frames * spf;
            let video = ModalityTensor::video(
                long.video.data()[v0..v0 + clip_frames * frame_len].to_vec(),
                clip_frames,
                vshape[1],
                vshape[2],
                vshape[3],
            )?;
            let audio = ModalityTensor::audio(long.audio.data()[a0..a0 + clip_frames * spf].to_vec());
            PairedSample::new(audio, video, long.cond_label, spf)
        })
        .collect()
}
