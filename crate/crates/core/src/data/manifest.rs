use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{read_pair, write_pair};
use super::scene::{generate_clip, SceneKind, ToySceneSpec};
use super::{segment_clips, PairedSample};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Settings for the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub clips: usize,
    pub clip_frames: usize,
    /// Each simulated scene is this long and is cut into clips.
    pub scene_frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples_per_frame: usize,
    pub fps: f64,
    pub ball_radius: f64,
    pub gravity: f64,
    pub restitution: f64,
    pub tone_hz: f64,
    pub click_amplitude: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = ToySceneSpec::default();
        Self {
            clips: 64,
            clip_frames: 16,
            scene_frames: 32,
            channels: s.channels,
            height: s.height,
            width: s.width,
            samples_per_frame: s.samples_per_frame,
            fps: s.fps,
            ball_radius: s.ball_radius,
            gravity: s.gravity,
            restitution: s.restitution,
            tone_hz: s.tone_hz,
            click_amplitude: s.click_amplitude,
        }
    }
}

impl DataConfig {
    pub fn scene_spec(&self, kind: SceneKind) -> ToySceneSpec {
        ToySceneSpec {
            kind,
            frames: self.scene_frames,
            channels: self.channels,
            height: self.height,
            width: self.width,
            ball_radius: self.ball_radius,
            gravity: self.gravity,
            restitution: self.restitution,
            tone_hz: self.tone_hz,
            click_amplitude: self.click_amplitude,
            samples_per_frame: self.samples_per_frame,
            fps: self.fps,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips == 0 {
            return Err(Error::param("clips must be positive"));
        }
        if self.clip_frames == 0 || self.scene_frames < self.clip_frames {
            return Err(Error::param(format!(
                "scene_frames ({}) must be at least clip_frames ({}) and clip_frames positive",
                self.scene_frames, self.clip_frames
            )));
        }
        self.scene_spec(SceneKind::BouncingBall).validate()
    }

    pub fn shapes(&self) -> ManifestShapes {
        ManifestShapes {
            audio: vec![self.clip_frames * self.samples_per_frame],
            video: vec![self.clip_frames, self.channels, self.height, self.width],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestShapes {
    pub audio: Vec<usize>,
    pub video: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub class_label: Option<u32>,
}

/// Index of a corpus directory and the single entry point for training and
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub shapes: ManifestShapes,
    pub samples_per_frame: usize,
    pub seed: u64,
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    /// Writes every pair under `dir/clips/` and then `dir/manifest.json`.
    /// The manifest is renamed into place last, so a failure never leaves a
    /// manifest pointing at missing clips.
    pub fn write_corpus(dir: &Path, pairs: &[PairedSample], seed: u64) -> Result<(Self, PathBuf)> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::Data("cannot write an empty corpus".into()))?;
        let shapes = ManifestShapes {
            audio: first.audio.shape().to_vec(),
            video: first.video.shape().to_vec(),
        };
        fs::create_dir_all(dir.join("clips"))?;
        let mut clips = Vec::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            if pair.audio.shape() != shapes.audio.as_slice() || pair.video.shape() != shapes.video.as_slice() {
                return Err(Error::Data(format!("pair {i} does not match the corpus shapes")));
            }
            let file = format!("clips/clip_{i:05}.mmp");
            write_pair(&dir.join(&file), pair)?;
            clips.push(ClipEntry {
                file,
                class_label: pair.cond_label,
            });
        }
        let manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            count: clips.len(),
            shapes,
            samples_per_frame: first.samples_per_frame,
            seed,
            clips,
        };
        let path = dir.join("manifest.json");
        let tmp = dir.join(".manifest.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
        fs::rename(&tmp, &path)?;
        Ok((manifest, path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Data(format!("unsupported manifest version {}", m.version)));
        }
        if m.count != m.clips.len() {
            return Err(Error::Data(format!(
                "manifest declares {} clips but lists {}",
                m.count,
                m.clips.len()
            )));
        }
        Ok(m)
    }

    fn base_dir(path: &Path) -> PathBuf {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// Reads every referenced pair, checking it against the declared shapes.
    pub fn load_pairs(&self, manifest_path: &Path) -> Result<Vec<PairedSample>> {
        let base = Self::base_dir(manifest_path);
        self.clips
            .iter()
            .map(|entry| {
                let path = base.join(&entry.file);
                if !path.is_file() {
                    return Err(Error::Data(format!("missing clip file {}", path.display())));
                }
                let pair = read_pair(&path)?;
                if pair.audio.shape() != self.shapes.audio.as_slice()
                    || pair.video.shape() != self.shapes.video.as_slice()
                {
                    return Err(Error::Data(format!("{} does not match the declared shapes", entry.file)));
                }
                if pair.samples_per_frame != self.samples_per_frame || pair.cond_label != entry.class_label {
                    return Err(Error::Data(format!("{} disagrees with the manifest header", entry.file)));
                }
                Ok(pair)
            })
            .collect()
    }

    pub fn validate(&self, manifest_path: &Path) -> Result<()> {
        self.load_pairs(manifest_path).map(|_| ())
    }
}

/// Simulates scenes (alternating classes), cuts them into clips and writes
/// the corpus with its manifest.
pub fn generate_dataset(cfg: &DataConfig, seed: u64, out_dir: &Path) -> Result<(DatasetManifest, PathBuf)> {
    cfg.validate()?;
    let mut pairs = Vec::with_capacity(cfg.clips);
    let mut scene = 0u64;
    while pairs.len() < cfg.clips {
        let kind = if scene % 2 == 0 {
            SceneKind::BouncingBall
        } else {
            SceneKind::PulsingLight
        };
        let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(scene);
        let (long, _) = generate_clip(&cfg.scene_spec(kind), scene_seed)?;
        for clip in segment_clips(&long, cfg.clip_frames)? {
            if pairs.len() < cfg.clips {
                pairs.push(clip);
            }
        }
        scene += 1;
    }
    DatasetManifest::write_corpus(out_dir, &pairs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_corpus_validates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DataConfig {
            clips: 5,
            ..Default::default()
        };
        let (m, path) = generate_dataset(&cfg, 3, dir.path()).unwrap();
        assert_eq!(m.count, 5);
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded, m);
        let pairs = loaded.load_pairs(&path).unwrap();
        assert_eq!(pairs[0].audio.len(), 16 * 160);
        assert_eq!(pairs[2].cond_label, Some(1));
    }

    #[test]
    fn missing_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DataConfig {
            clips: 2,
            ..Default::default()
        };
        let (m, path) = generate_dataset(&cfg, 3, dir.path()).unwrap();
        fs::remove_file(dir.path().join(&m.clips[1].file)).unwrap();
        assert!(matches!(m.validate(&path), Err(Error::Data(_))));
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DataConfig {
            ball_radius: 20.0,
            ..Default::default()
        };
        assert!(generate_dataset(&cfg, 0, dir.path()).is_err());
        assert!(!dir.path().join("manifest.json").exists());
    }
}
