//! Two-stage text-to-audio-video pipeline.

mod common;

use avgen_core::checkpoint::Checkpoint;
use avgen_core::data::{read_tensor, PairedSample};
use avgen_core::joint::JointConfig;
use avgen_core::models::{AnyModel, AudioFlow, ModelSpec, Sampler, VideoDiffusion, VideoFlow, VideoShape};
use avgen_core::pipeline::*;
use avgen_core::rng::stream_rng;
use avgen_core::train::{TrainConfig, Trainer};
use avgen_core::{Error, ScheduleConfig};
use common::random_pair;

const SHAPE: VideoShape = VideoShape {
    frames: 4,
    channels: 1,
    height: 4,
    width: 4,
};
const SPF: usize = 6;

fn trained(spec: ModelSpec, steps: usize) -> AnyModel {
    let data: Vec<PairedSample> = (0..4).map(|i| random_pair(i, 4, 1, 4, 4, SPF, Some((i % 2) as u32))).collect();
    let mut t = Trainer::new(
        spec.init(2).unwrap(),
        TrainConfig {
            steps,
            lr: 1e-3,
            threads: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    t.run(&data, |_| {}).unwrap();
    t.model
}

fn sched() -> ScheduleConfig {
    ScheduleConfig {
        steps: 20,
        ..Default::default()
    }
}

fn flow_video() -> VideoBackend {
    let spec = ModelSpec::FlowVideo {
        net: VideoFlow::net_config(SHAPE, 2, vec![8]),
        shape: SHAPE,
        num_classes: 2,
    };
    VideoBackend::from_model(trained(spec, 2), 2).unwrap()
}

fn ddpm_video() -> VideoBackend {
    let spec = ModelSpec::Ddpm {
        net: VideoDiffusion::net_config(SHAPE, 2, vec![8]),
        shape: SHAPE,
        num_classes: 2,
        schedule: sched(),
    };
    VideoBackend::from_model(trained(spec, 2), 2).unwrap()
}

fn flow_audio() -> AudioBackend {
    let spec = ModelSpec::FlowAudio {
        net: AudioFlow::net_config(SPF, 4, 2, vec![8]),
        num_classes: 2,
    };
    AudioBackend::from_model(trained(spec, 2), 2).unwrap()
}

fn joint_audio() -> AudioBackend {
    let spec = ModelSpec::Joint {
        config: JointConfig {
            frames: 4,
            height: 4,
            width: 4,
            samples_per_frame: SPF,
            video_hidden: vec![8],
            audio_hidden: vec![8],
            ..JointConfig::default()
        },
        schedule: sched(),
    };
    AudioBackend::from_model(trained(spec, 2), 2).unwrap()
}

fn options() -> PipelineOptions {
    PipelineOptions {
        video_sampler: Sampler::Ddim { steps: 5 },
        flow_steps: 6,
        ..PipelineOptions::default()
    }
}

#[test]
fn same_seed_same_output() {
    let prompt = Prompt::new("a ball bouncing", 2.0);
    for vb in [flow_video(), ddpm_video()] {
        for ab in [flow_audio(), joint_audio()] {
            let (a, ra) = run_pipeline(&prompt, &vb, &ab, &options(), 9).unwrap();
            let (b, _) = run_pipeline(&prompt, &vb, &ab, &options(), 9).unwrap();
            let (c, _) = run_pipeline(&prompt, &vb, &ab, &options(), 10).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.video, c.video);
            assert_eq!(a.cond_label, Some(0));
            assert_eq!(a.audio.len(), 4 * SPF);
            assert_eq!((ra.frames, ra.samples_per_frame), (4, SPF));
        }
    }
}

#[test]
fn zero_guidance_is_the_unconditional_sample() {
    let vb = flow_video();
    let got = generate_video(&Prompt::new("pulsing light", 0.0), &vb, &options(), 4).unwrap();
    let VideoBackend::ToyFlow { model, .. } = &vb else { unreachable!() };
    let want = model.sample(None, None, 6, options().flow_method, &mut stream_rng(4, 1)).unwrap();
    assert_eq!(got, want);

    let vb = ddpm_video();
    let got = generate_video(&Prompt::new("pulsing light", 0.0), &vb, &options(), 4).unwrap();
    let VideoBackend::ToyDiffusion { model, .. } = &vb else { unreachable!() };
    let want = model.sample(None, None, options().video_sampler, &mut stream_rng(4, 1)).unwrap();
    assert_eq!(got, want);
}

#[test]
fn unit_guidance_is_the_conditional_sample() {
    let vb = flow_video();
    let got = generate_video(&Prompt::new("glow", 1.0), &vb, &options(), 5).unwrap();
    let VideoBackend::ToyFlow { model, .. } = &vb else { unreachable!() };
    let want = model.sample(Some(1), None, 6, options().flow_method, &mut stream_rng(5, 1)).unwrap();
    assert_eq!(got, want);
}

#[test]
fn negative_prompt_changes_the_video() {
    let vb = flow_video();
    let plain = generate_video(&Prompt::new("ball", 3.0), &vb, &options(), 1).unwrap();
    let neg = generate_video(&Prompt::new("ball", 3.0).with_negative("light"), &vb, &options(), 1).unwrap();
    assert_ne!(plain, neg);
    let bad = Prompt::new("ball", 3.0).with_negative("meadow");
    assert!(matches!(generate_video(&bad, &vb, &options(), 1), Err(Error::PromptResolution(_))));
}

#[test]
fn failures_name_their_stage() {
    let err = run_pipeline(&Prompt::new("a quiet meadow", 2.0), &flow_video(), &flow_audio(), &options(), 0).unwrap_err();
    let Error::Stage { stage, source } = &err else { panic!("{err}") };
    assert_eq!(*stage, "video");
    assert!(matches!(**source, Error::PromptResolution(_)));
    assert_eq!(err.exit_code(), 2);

    let negative = Prompt::new("ball", 2.0).with_negative("light");
    let err = run_pipeline(&negative, &flow_video(), &joint_audio(), &options(), 0).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "audio", .. }), "{err}");

    let err = run_pipeline(&Prompt::new("ball", -1.0), &flow_video(), &flow_audio(), &options(), 0).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "video", .. }));
}

#[test]
fn untrained_backends_are_state_errors() {
    let spec = ModelSpec::FlowVideo {
        net: VideoFlow::net_config(SHAPE, 2, vec![8]),
        shape: SHAPE,
        num_classes: 2,
    };
    let fresh = Trainer::new(spec.init(0).unwrap(), TrainConfig::default()).unwrap();
    let ck = Checkpoint::from_trainer(&fresh);
    let err = VideoBackend::from_checkpoint(ck.clone()).unwrap_err();
    assert!(matches!(err, Error::State(_)));
    assert_eq!(err.exit_code(), 5);
    assert!(matches!(AudioBackend::from_checkpoint(ck), Err(Error::State(_))));
    // The wrong kind of trained model is a configuration problem.
    assert!(matches!(AudioBackend::from_model(spec.init(0).unwrap(), 3), Err(Error::Configuration(_))));
}

#[test]
fn run_record_json_round_trips() {
    let prompt = Prompt::new("bouncing ball", 2.5).with_negative("tone");
    let (_, rec) = run_pipeline(&prompt, &ddpm_video(), &flow_audio(), &options(), 3).unwrap();
    let back = RunRecord::from_json(&rec.to_json().unwrap()).unwrap();
    assert_eq!(back, rec);
    assert_eq!(rec.video_backend.kind, "toy_diffusion");
    assert_eq!(rec.audio_backend.kind, "toy_flow_v2a");
    assert_eq!(rec.prompt.class_label, Some(0));
}

#[test]
fn exports_write_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (pair, _) = run_pipeline(&Prompt::new("ball", 2.0), &flow_video(), &flow_audio(), &options(), 1).unwrap();
    let png_path = tmp.path().join("f.png");
    write_png_strip(&pair.video, 2, &png_path).unwrap();
    let png = std::fs::read(&png_path).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    let wav_path = tmp.path().join("a.wav");
    write_wav(&pair.audio, 48, &wav_path).unwrap();
    let r = hound::WavReader::open(&wav_path).unwrap();
    assert_eq!((r.spec().sample_rate, r.len() as usize), (48, 4 * SPF));
    // Tensors written by the CLI layer read back through the data module.
    let t = tmp.path().join("v.mmt");
    avgen_core::data::write_tensor(&t, &pair.video).unwrap();
    assert_eq!(read_tensor(&t).unwrap(), pair.video);
}
