//! Analytic gradients against central differences.

mod common;

use avgen_core::diffusion::ddpm_loss_slice;
use avgen_core::flowmatch::{cfm_loss, FlowField};
use avgen_core::joint::{JointConfig, JointDenoiser};
use avgen_core::models::{AnyModel, ModelSpec, Trainable, VideoShape};
use avgen_core::netcore::{DenoiserNet, FrameNet, FrameNetConfig, NetConfig, NetInput, Reduction};
use avgen_core::rng::{normal_vec, stream_rng};
use avgen_core::NoiseSchedule;
use common::{max_rel_error, random_pair};

const TOL: f64 = 1e-4;

fn net(cfg: NetConfig, seed: u64) -> DenoiserNet {
    let n = DenoiserNet::new(cfg, seed).unwrap();
    assert!(n.param_count() <= 1000, "{} params", n.param_count());
    n
}

/// Squared error of one forward pass against a fixed target.
fn sq_loss(n: &DenoiserNet, input: NetInput, target: &[f64]) -> f64 {
    n.forward(input).unwrap().iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum()
}

#[test]
fn denoiser_net_variants() {
    let cases = [
        NetConfig::new(5, 0, vec![8]),
        NetConfig::new(4, 3, vec![6, 5]),
        NetConfig {
            experts: 3,
            ..NetConfig::new(3, 2, vec![6])
        },
        NetConfig {
            gated_skip: true,
            ..NetConfig::new(4, 2, vec![7, 7])
        },
    ];
    for (k, cfg) in cases.into_iter().enumerate() {
        let mut rng = stream_rng(k as u64, 1);
        let x = normal_vec(&mut rng, cfg.data_dim);
        let cond = (cfg.cond_dim > 0).then(|| normal_vec(&mut rng, cfg.cond_dim));
        let target = normal_vec(&mut rng, cfg.data_dim);
        let expert = cfg.experts - 1;
        let n = net(cfg.clone(), 10 + k as u64);
        let inp = NetInput {
            expert,
            ..NetInput::new(&x, 37.0, cond.as_deref())
        };
        let (pred, tape) = n.forward_with_tape(inp).unwrap();
        let g: Vec<f64> = pred.iter().zip(&target).map(|(p, y)| 2.0 * (p - y)).collect();
        let analytic = n.backward(&tape, &g).unwrap();
        let err = max_rel_error(n.params(), &analytic, |p| {
            let m = DenoiserNet::from_params(cfg.clone(), p.to_vec()).unwrap();
            sq_loss(
                &m,
                NetInput {
                    expert,
                    ..NetInput::new(&x, 37.0, cond.as_deref())
                },
                &target,
            )
        });
        assert!(err < TOL, "case {k}: max relative error {err:e}");
    }
}

#[test]
fn ddpm_loss_gradient() {
    let s = NoiseSchedule::linear(50, 1e-3, 0.05).unwrap();
    let cfg = NetConfig::new(6, 2, vec![10, 10]);
    let n = net(cfg.clone(), 3);
    let mut rng = stream_rng(4, 0);
    let x0 = normal_vec(&mut rng, 6);
    let eps = normal_vec(&mut rng, 6);
    let cond = [0.0, 1.0];
    for t in [1, 25, 50] {
        let lg = ddpm_loss_slice(&n, &x0, t, &eps, &s, Some(&cond)).unwrap();
        let err = max_rel_error(n.params(), &lg.grad, |p| {
            let m = DenoiserNet::from_params(cfg.clone(), p.to_vec()).unwrap();
            ddpm_loss_slice(&m, &x0, t, &eps, &s, Some(&cond)).unwrap().loss
        });
        assert!(err < TOL, "t={t}: {err:e}");
    }
}

#[test]
fn cfm_loss_gradient() {
    let cfg = NetConfig::new(4, 3, vec![12, 12]);
    let f = FlowField::new(net(cfg.clone(), 5));
    let mut rng = stream_rng(6, 0);
    let x0 = normal_vec(&mut rng, 4);
    let x1 = normal_vec(&mut rng, 4);
    let c = normal_vec(&mut rng, 3);
    for t in [0.0, 0.3, 1.0] {
        let lg = cfm_loss(&f, &x0, &x1, t, Some(&c)).unwrap();
        let err = max_rel_error(f.net.params(), &lg.grad, |p| {
            let g = FlowField::new(DenoiserNet::from_params(cfg.clone(), p.to_vec()).unwrap());
            cfm_loss(&g, &x0, &x1, t, Some(&c)).unwrap().loss
        });
        assert!(err < TOL, "t={t}: {err:e}");
    }
}

fn tiny_joint() -> JointConfig {
    JointConfig {
        frames: 4,
        channels: 1,
        height: 2,
        width: 2,
        samples_per_frame: 3,
        cross_window: 2,
        num_classes: 2,
        time_embed_dim: 4,
        video_hidden: vec![6],
        audio_hidden: vec![6],
        experts: 1,
    }
}

#[test]
fn joint_loss_gradient() {
    let cfg = tiny_joint();
    let jd = JointDenoiser::new(cfg.clone(), 8).unwrap();
    assert!(jd.param_count() <= 1000, "{} params", jd.param_count());
    let s = NoiseSchedule::linear(30, 1e-3, 0.1).unwrap();
    let pair = random_pair(1, 4, 1, 2, 2, 3, Some(1));
    let mut rng = stream_rng(2, 0);
    let eps_a = pair.audio.like_from_f64(&normal_vec(&mut rng, 12)).unwrap();
    let eps_v = pair.video.like_from_f64(&normal_vec(&mut rng, 16)).unwrap();
    for (t, shift, class) in [(1, 0, Some(1)), (15, 1, None), (30, 1, Some(0))] {
        let l = jd.joint_loss(&pair, t, &eps_a, &eps_v, &s, class, shift).unwrap();
        assert!((l.loss - l.audio_loss - l.video_loss).abs() < 1e-15);
        let err = max_rel_error(&jd.params(), &l.grad, |p| {
            let mut m = jd.clone();
            m.set_params(p).unwrap();
            m.joint_loss(&pair, t, &eps_a, &eps_v, &s, class, shift).unwrap().loss
        });
        assert!(err < TOL, "t={t} shift={shift}: {err:e}");
    }
}

#[test]
fn frame_net_gradient_both_reductions() {
    let cfg = FrameNetConfig {
        time_embed_dim: 4,
        ..FrameNetConfig::new(3, 1, 2, 2, vec![8])
    };
    let fnet = FrameNet::new(cfg.clone(), 9).unwrap();
    let mut rng = stream_rng(3, 3);
    let x = normal_vec(&mut rng, 12);
    let target = normal_vec(&mut rng, 12);
    let extras: Vec<Vec<f64>> = (0..4).map(|_| normal_vec(&mut rng, 2)).collect();
    let class = [1.0, 0.0];
    for red in [Reduction::Mean, Reduction::Sum] {
        let lg = fnet.loss(&x, 12.0, &extras, &class, &target, red).unwrap();
        let err = max_rel_error(fnet.net.params(), &lg.grad, |p| {
            let mut m = fnet.clone();
            m.net.set_params(p.to_vec()).unwrap();
            m.loss(&x, 12.0, &extras, &class, &target, red).unwrap().loss
        });
        assert!(err < TOL, "{red:?}: {err:e}");
    }
}

/// Every trainable model's example loss, with its randomness pinned.
#[test]
fn model_example_losses() {
    let shape = VideoShape {
        frames: 4,
        channels: 1,
        height: 2,
        width: 2,
    };
    let small = |mut c: FrameNetConfig| {
        c.time_embed_dim = 4;
        c
    };
    let specs = [
        ModelSpec::Ddpm {
            net: small(avgen_core::models::VideoDiffusion::net_config(shape, 2, vec![5])),
            shape,
            num_classes: 2,
            schedule: avgen_core::ScheduleConfig {
                steps: 20,
                ..Default::default()
            },
        },
        ModelSpec::FlowVideo {
            net: small(avgen_core::models::VideoFlow::net_config(shape, 2, vec![5])),
            shape,
            num_classes: 2,
        },
        ModelSpec::FlowAudio {
            net: small(avgen_core::models::AudioFlow::net_config(3, 2, 2, vec![5])),
            num_classes: 2,
        },
        ModelSpec::Joint {
            config: tiny_joint(),
            schedule: avgen_core::ScheduleConfig {
                steps: 20,
                ..Default::default()
            },
        },
    ];
    let pair = random_pair(5, 4, 1, 2, 2, 3, Some(0));
    for spec in specs {
        let model: AnyModel = spec.init(11).unwrap();
        assert!(model.param_count() <= 1000, "{}: {}", spec.kind_name(), model.param_count());
        let l = model.example_loss(&pair, false, &mut stream_rng(1, 2)).unwrap();
        let err = max_rel_error(&model.params(), &l.grad, |p| {
            let m = spec.with_params(p).unwrap();
            m.example_loss(&pair, false, &mut stream_rng(1, 2)).unwrap().loss
        });
        assert!(err < TOL, "{}: {err:e}", spec.kind_name());
    }
}
