//! The operations behind each command-line subcommand, callable from Rust
//! and Python alike. Nothing here mutates its inputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, TrainMode};
use crate::data::{generate_dataset, write_tensor, DatasetManifest, PairedSample};
use crate::joint::JointSampling;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::models::{AnyModel, ClassGuidance};
use crate::pipeline::{run_pipeline, write_png_strip, write_wav, AudioBackend, Prompt, RunRecord, VideoBackend};
use crate::rng::stream_rng;
use crate::train::{StepRecord, Trainer};

/// Tail length used for the reported final loss.
pub const FINAL_LOSS_WINDOW: usize = 10;

/// Writes the synthetic corpus; the configuration is validated first so a
/// bad configuration leaves nothing behind.
pub fn cmd_generate_data(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    Ok(generate_dataset(&cfg.data, cfg.train.seed, out_dir)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: TrainMode,
    /// Loss of the first step taken by this invocation.
    pub first_loss: f64,
    /// Mean of the last [`FINAL_LOSS_WINDOW`] step losses.
    pub final_loss: f64,
    pub steps_run: usize,
    pub total_steps: usize,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
}

/// Path of the loss curve written next to a checkpoint.
pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn write_loss_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut out = String::from("step,loss,audio_loss,video_loss\n");
    for r in records {
        out.push_str(&format!("{},{:e},{},{}\n", r.step, r.loss, fmt_opt(r.audio_loss), fmt_opt(r.video_loss)));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Trains `mode` on the corpus behind `manifest` and writes a checkpoint
/// plus a loss CSV with one row per step run. With `resume`, training
/// continues from that checkpoint up to `cfg.train.steps` steps in total.
pub fn cmd_train(
    cfg: &RunConfig,
    manifest: &Path,
    mode: TrainMode,
    out: &Path,
    resume: Option<&Path>,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainSummary> {
    cfg.validate()?;
    let m = DatasetManifest::load(manifest)?;
    let pairs = m.load_pairs(manifest)?;
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let kind = cfg.model_spec(mode, &m.shapes, m.samples_per_frame)?.kind_name();
            if ck.model.spec().kind_name() != kind {
                return Err(Error::Configuration(format!(
                    "checkpoint holds a {} model, not {kind}",
                    ck.model.spec().kind_name()
                )));
            }
            ck.into_trainer(Some(cfg.train.steps))?
        }
        None => {
            let model = cfg.model_spec(mode, &m.shapes, m.samples_per_frame)?.init(cfg.train.seed)?;
            Trainer::new(model, cfg.train.clone())?
        }
    };
    let records = trainer.run(&pairs, &mut on_step)?;
    let first = records
        .first()
        .ok_or_else(|| Error::State(format!("nothing to do: already at {} steps", trainer.step_count())))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Checkpoint::from_trainer(&trainer).save(out)?;
    let loss_csv = loss_csv_path(out);
    write_loss_csv(&loss_csv, &records)?;
    Ok(TrainSummary {
        mode,
        first_loss: first.loss,
        final_loss: crate::train::tail_mean(&records, FINAL_LOSS_WINDOW),
        steps_run: records.len(),
        total_steps: trainer.step_count(),
        checkpoint: out.to_path_buf(),
        loss_csv,
    })
}

/// Options of [`cmd_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub count: usize,
    pub seed: u64,
    /// Fixed class; `None` alternates 0, 1, 0, ...
    pub class: Option<u32>,
    pub guidance: Option<f64>,
}

/// Draws clips from a checkpoint. The joint model writes a paired corpus
/// with a manifest (returned); video models write `video_XXXXX.mmt`
/// tensors and return the output directory.
pub fn cmd_sample(cfg: &RunConfig, checkpoint: &Path, opts: &SampleOptions, out_dir: &Path) -> Result<PathBuf> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.step() == 0 {
        return Err(Error::State("checkpoint has not been trained".into()));
    }
    let class_of = |i: usize| opts.class.unwrap_or((i % 2) as u32);
    let guidance = opts.guidance.map(ClassGuidance::new);
    fs::create_dir_all(out_dir)?;
    match &ck.model {
        AnyModel::Joint(m) => {
            let joint = JointSampling {
                guidance: opts.guidance.unwrap_or(1.0),
                ..JointSampling::default()
            };
            let pairs = (0..opts.count)
                .map(|i| m.sample_with(Some(class_of(i)), joint, &mut stream_rng(opts.seed, i as u64)))
                .collect::<Result<Vec<PairedSample>>>()?;
            Ok(DatasetManifest::write_corpus(out_dir, &pairs, opts.seed)?.1)
        }
        AnyModel::Ddpm(_) | AnyModel::FlowVideo(_) => {
            for i in 0..opts.count {
                let mut rng = stream_rng(opts.seed, i as u64);
                let class = Some(class_of(i));
                let v = match &ck.model {
                    AnyModel::Ddpm(m) => m.sample(class, guidance, cfg.eval.sampler, &mut rng)?,
                    AnyModel::FlowVideo(m) => m.sample(class, guidance, cfg.eval.flow_steps, cfg.eval.flow_method, &mut rng)?,
                    _ => unreachable!("matched above"),
                };
                write_tensor(&out_dir.join(format!("video_{i:05}.mmt")), &v)?;
            }
            Ok(out_dir.to_path_buf())
        }
        AnyModel::FlowAudio(_) => Err(Error::Configuration(
            "a video-to-audio model needs a video; use the pipeline command".into(),
        )),
    }
}

pub fn cmd_eval(real_manifest: &Path, generated_manifest: &Path) -> Result<EvalReport> {
    let load = |p: &Path| DatasetManifest::load(p)?.load_pairs(p);
    evaluate(&load(real_manifest)?, &load(generated_manifest)?)
}

/// Inputs of [`cmd_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineRequest {
    pub prompt: Prompt,
    pub seed: u64,
    /// Runs with seeds `seed, seed + 1, ...`.
    pub count: usize,
    pub video_checkpoint: PathBuf,
    pub audio_checkpoint: PathBuf,
}

/// Runs the two-stage pipeline `count` times. Run `i` writes
/// `run_XXXXX/{video.mmt, audio.mmt, frames.png, audio.wav, record.json}`;
/// all pairs also go into a corpus with `manifest.json` for evaluation.
pub fn cmd_pipeline(cfg: &RunConfig, req: &PipelineRequest, out_dir: &Path) -> Result<Vec<RunRecord>> {
    let video = VideoBackend::from_checkpoint(Checkpoint::load(&req.video_checkpoint)?)?;
    let audio = AudioBackend::from_checkpoint(Checkpoint::load(&req.audio_checkpoint)?)?;
    let sample_rate = cfg.data.scene_spec(crate::data::SceneKind::BouncingBall).sample_rate().round() as u32;
    let mut pairs = Vec::with_capacity(req.count);
    let mut records = Vec::with_capacity(req.count);
    for i in 0..req.count {
        let seed = req.seed.wrapping_add(i as u64);
        let (pair, record) = run_pipeline(&req.prompt, &video, &audio, &cfg.pipeline, seed)?;
        let dir = out_dir.join(format!("run_{i:05}"));
        fs::create_dir_all(&dir)?;
        write_tensor(&dir.join("video.mmt"), &pair.video)?;
        write_tensor(&dir.join("audio.mmt"), &pair.audio)?;
        write_png_strip(&pair.video, 8, &dir.join("frames.png"))?;
        write_wav(&pair.audio, sample_rate, &dir.join("audio.wav"))?;
        fs::write(dir.join("record.json"), record.to_json()?)?;
        pairs.push(pair);
        records.push(record);
    }
    if !pairs.is_empty() {
        DatasetManifest::write_corpus(out_dir, &pairs, req.seed)?;
    }
    Ok(records)
}
