//! Single-modality DDPM: forward noising, the ε-prediction objective,
//! ancestral and DDIM sampling, and classifier-free guidance.
//!
//! The network predicts the injected noise ε. The reverse variance is fixed
//! to the posterior variance of the schedule.

use rand::Rng;

use crate::error::{Error, Result};
use crate::netcore::{DenoiserNet, NetInput};
use crate::rng::normal_vec;
use crate::schedule::NoiseSchedule;
use crate::tensor::ModalityTensor;

/// Scalar loss and its gradient over the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Classifier-free guidance settings. The unconditional branch uses
/// `negative` when present, otherwise the network's null condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub scale: f64,
    pub negative: Option<Vec<f64>>,
}

impl Guidance {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            negative: None,
        }
    }
}

/// `√ᾱ_t x0 + √(1-ᾱ_t) ε` on raw slices.
pub fn q_sample_slice(x0: &[f64], t: usize, eps: &[f64], s: &NoiseSchedule) -> Result<Vec<f64>> {
    if x0.len() != eps.len() {
        return Err(Error::dim("noise", x0.len(), eps.len()));
    }
    let c = s.coeffs_at(t)?;
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| c.sqrt_alpha_bar * x + c.sqrt_one_minus_alpha_bar * e)
        .collect())
}

pub fn q_sample(x0: &ModalityTensor, t: usize, eps: &ModalityTensor, s: &NoiseSchedule) -> Result<ModalityTensor> {
    x0.ensure_same_shape(eps, "noise")?;
    let out = q_sample_slice(&x0.to_f64(), t, &eps.to_f64(), s)?;
    x0.like_from_f64(&out)
}

/// `u + ω (c - u)`, returning `u` and `c` verbatim at ω = 0 and ω = 1.
pub fn cfg_combine(uncond: &[f64], cond: &[f64], scale: f64) -> Vec<f64> {
    if scale == 0.0 {
        return uncond.to_vec();
    }
    if scale == 1.0 {
        return cond.to_vec();
    }
    uncond
        .iter()
        .zip(cond)
        .map(|(u, c)| u + scale * (c - u))
        .collect()
}

/// Noise prediction, with guidance when requested.
pub fn predict_eps(net: &DenoiserNet, x: &[f64], t: usize, cond: Option<&[f64]>, guidance: Option<&Guidance>) -> Result<Vec<f64>> {
    let time = t as f64;
    match guidance {
        None => net.forward(NetInput::new(x, time, cond)),
        Some(g) => {
            if !net.is_conditional() {
                return Err(Error::Configuration(
                    "guidance requested on an unconditional network".into(),
                ));
            }
            let cond = cond.ok_or_else(|| {
                Error::Configuration("guidance requested without a condition".into())
            })?;
            let null = net.null_cond();
            let uncond_emb = g.negative.as_deref().unwrap_or(&null);
            let e_u = net.forward(NetInput::new(x, time, Some(uncond_emb)))?;
            if g.scale == 0.0 {
                return Ok(e_u);
            }
            let e_c = net.forward(NetInput::new(x, time, Some(cond)))?;
            Ok(cfg_combine(&e_u, &e_c, g.scale))
        }
    }
}

/// Mean squared ε error at `q_sample(x0, t, eps)` and its parameter gradient.
pub fn ddpm_loss_slice(net: &DenoiserNet, x0: &[f64], t: usize, eps: &[f64], s: &NoiseSchedule, cond: Option<&[f64]>) -> Result<LossGrad> {
    let xt = q_sample_slice(x0, t, eps, s)?;
    let (pred, tape) = net.forward_with_tape(NetInput::new(&xt, t as f64, cond))?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad_out: Vec<f64> = pred
        .iter()
        .zip(eps)
        .map(|(p, e)| {
            let r = p - e;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    let grad = net.backward(&tape, &grad_out)?;
    Ok(LossGrad {
        loss: loss / n,
        grad,
    })
}

pub fn ddpm_loss(net: &DenoiserNet, x0: &ModalityTensor, t: usize, eps: &ModalityTensor, s: &NoiseSchedule, cond: Option<&[f64]>) -> Result<LossGrad> {
    x0.ensure_same_shape(eps, "noise")?;
    ddpm_loss_slice(net, &x0.to_f64(), t, &eps.to_f64(), s, cond)
}

/// One reverse step given a noise prediction:
/// `μ = (x_t - β_t/√(1-ᾱ_t) ε̂) / √α_t`, plus `√β̃_t z` for `t > 1`.
pub fn posterior_step(s: &NoiseSchedule, t: usize, x_t: &[f64], eps_hat: &[f64], z: Option<&[f64]>) -> Result<Vec<f64>> {
    let c = s.coeffs_at(t)?;
    let beta = s.beta(t)?;
    let inv_sqrt_alpha = 1.0 / s.alpha(t)?.sqrt();
    let eps_coef = beta / c.sqrt_one_minus_alpha_bar;
    let sigma = c.posterior_variance.sqrt();
    let mut out: Vec<f64> = x_t
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| inv_sqrt_alpha * (x - eps_coef * e))
        .collect();
    if t > 1 {
        let z = z.ok_or_else(|| Error::State("reverse step above t=1 needs noise".into()))?;
        for (o, zi) in out.iter_mut().zip(z) {
            *o += sigma * zi;
        }
    }
    Ok(out)
}

/// Ancestral step `x_t -> x_{t-1}`. No noise is drawn at `t = 1`.
pub fn p_sample_step<R: Rng + ?Sized>(
    net: &DenoiserNet,
    x_t: &ModalityTensor,
    t: usize,
    s: &NoiseSchedule,
    cond: Option<&[f64]>,
    guidance: Option<&Guidance>,
    rng: &mut R,
) -> Result<ModalityTensor> {
    s.check_t(t)?;
    let x = x_t.to_f64();
    let eps_hat = predict_eps(net, &x, t, cond, guidance)?;
    let z = (t > 1).then(|| normal_vec(rng, x.len()));
    let out = posterior_step(s, t, &x, &eps_hat, z.as_deref())?;
    x_t.like_from_f64(&out)
}

/// Full ancestral chain from `x_start` down to `x_0`.
pub fn p_sample_loop<R: Rng + ?Sized>(
    net: &DenoiserNet,
    x_start: &ModalityTensor,
    s: &NoiseSchedule,
    cond: Option<&[f64]>,
    guidance: Option<&Guidance>,
    rng: &mut R,
) -> Result<ModalityTensor> {
    p_sample_loop_with(|x, t| predict_eps(net, x, t, cond, guidance), x_start, s, rng)
}

/// Ancestral chain driven by an arbitrary noise predictor `eps(x_t, t)`.
pub fn p_sample_loop_with<F, R>(mut eps: F, x_start: &ModalityTensor, s: &NoiseSchedule, rng: &mut R) -> Result<ModalityTensor>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    let mut x = x_start.to_f64();
    for t in (1..=s.len()).rev() {
        let eps_hat = eps(&x, t)?;
        let z = (t > 1).then(|| normal_vec(rng, x.len()));
        x = posterior_step(s, t, &x, &eps_hat, z.as_deref())?;
    }
    x_start.like_from_f64(&x)
}

#[derive(Debug, Clone)]
pub struct DdimOutput {
    pub sample: ModalityTensor,
    /// States after each update, in visiting order.
    pub trajectory: Vec<ModalityTensor>,
}

/// Deterministic (η = 0) implicit sampler over a strictly decreasing subset
/// of timesteps. After the last listed step the state is moved to ᾱ = 1.
pub fn ddim_sample(
    net: &DenoiserNet,
    x_start: &ModalityTensor,
    s: &NoiseSchedule,
    steps: &[usize],
    cond: Option<&[f64]>,
    guidance: Option<&Guidance>,
    keep_trajectory: bool,
) -> Result<DdimOutput> {
    ddim_sample_with(|x, t| predict_eps(net, x, t, cond, guidance), x_start, s, steps, keep_trajectory)
}

/// [`ddim_sample`] driven by an arbitrary noise predictor `eps(x_t, t)`.
pub fn ddim_sample_with<F>(mut eps: F, x_start: &ModalityTensor, s: &NoiseSchedule, steps: &[usize], keep_trajectory: bool) -> Result<DdimOutput>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    if steps.is_empty() {
        return Err(Error::param("DDIM needs at least one step"));
    }
    if steps.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::param("DDIM step indices must be strictly decreasing"));
    }
    for &t in steps {
        s.check_t(t)?;
    }
    let mut x = x_start.to_f64();
    let mut trajectory = Vec::new();
    for (i, &t) in steps.iter().enumerate() {
        let eps_hat = eps(&x, t)?;
        let ab = s.alpha_bar(t)?;
        let ab_prev = s.alpha_bar(steps.get(i + 1).copied().unwrap_or(0))?;
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let (pa, pb) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
        for (xi, e) in x.iter_mut().zip(&eps_hat) {
            let x0 = (*xi - sb * e) / sa;
            *xi = pa * x0 + pb * e;
        }
        if keep_trajectory {
            trajectory.push(x_start.like_from_f64(&x)?);
        }
    }
    Ok(DdimOutput {
        sample: x_start.like_from_f64(&x)?,
        trajectory,
    })
}
