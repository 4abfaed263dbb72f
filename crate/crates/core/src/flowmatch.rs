//! Conditional flow matching on the straight path `x_t = t x1 + (1 - t) x0`
//! and fixed-step ODE integration of a learned velocity field.

use serde::{Deserialize, Serialize};

use crate::diffusion::{cfg_combine, LossGrad};
use crate::error::{Error, Result};
use crate::netcore::{DenoiserNet, NetInput};

/// Flow time `t ∈ [0, 1]` is fed to the sinusoidal embedding as `t * 100`.
pub const FLOW_TIME_SCALE: f64 = 100.0;
pub const DEFAULT_FLOW_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMethod {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for FlowMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            other => Err(Error::param(format!("unknown integration method {other:?}"))),
        }
    }
}

/// Anything that can be integrated: `dx/dt = v(t, x)`.
pub trait VelocityField {
    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
}

impl<F> VelocityField for F
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self(t, x)
    }
}

/// A network read as a velocity field `v_θ(t, C, x)`.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub net: DenoiserNet,
}

impl FlowField {
    pub fn new(net: DenoiserNet) -> Self {
        Self { net }
    }

    pub fn cond_dim(&self) -> usize {
        self.net.config().cond_dim
    }

    pub fn data_dim(&self) -> usize {
        self.net.config().data_dim
    }

    pub fn velocity_at(&self, t: f64, x: &[f64], cond: Option<&[f64]>) -> Result<Vec<f64>> {
        self.net.forward(NetInput::new(x, t * FLOW_TIME_SCALE, cond))
    }

    /// Fixes the condition (and optional guidance) to get an integrable field.
    pub fn conditioned<'a>(&'a self, cond: Option<&'a [f64]>, guidance: Option<(f64, &'a [f64])>) -> Conditioned<'a> {
        Conditioned {
            field: self,
            cond,
            guidance,
        }
    }
}

/// [`FlowField`] with a fixed condition. With guidance `(ω, u_cond)` the
/// velocity is `v(u_cond) + ω (v(cond) - v(u_cond))`, where `u_cond` is the
/// null or negative condition.
#[derive(Debug, Clone, Copy)]
pub struct Conditioned<'a> {
    field: &'a FlowField,
    cond: Option<&'a [f64]>,
    guidance: Option<(f64, &'a [f64])>,
}

impl VelocityField for Conditioned<'_> {
    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match (self.guidance, self.cond) {
            (Some((scale, uncond)), Some(cond)) => {
                let u = self.field.velocity_at(t, x, Some(uncond))?;
                if scale == 0.0 {
                    return Ok(u);
                }
                let c = self.field.velocity_at(t, x, Some(cond))?;
                Ok(cfg_combine(&u, &c, scale))
            }
            (Some(_), None) => Err(Error::Configuration("guidance needs a condition".into())),
            (None, cond) => self.field.velocity_at(t, x, cond),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("flow time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Point on the straight path and its (constant) target velocity.
pub fn cfm_pair(x0: &[f64], x1: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x0.len() != x1.len() {
        return Err(Error::dim("flow endpoints", x0.len(), x1.len()));
    }
    check_t(t)?;
    let xt = x0.iter().zip(x1).map(|(a, b)| t * b + (1.0 - t) * a).collect();
    let u = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
    Ok((xt, u))
}

/// `‖v_θ(t, C, x_t) - (x1 - x0)‖²` and its parameter gradient.
pub fn cfm_loss(f: &FlowField, x0: &[f64], x1: &[f64], t: f64, cond: Option<&[f64]>) -> Result<LossGrad> {
    let (xt, u) = cfm_pair(x0, x1, t)?;
    let (v, tape) = f.net.forward_with_tape(NetInput::new(&xt, t * FLOW_TIME_SCALE, cond))?;
    let mut loss = 0.0;
    let g: Vec<f64> = v
        .iter()
        .zip(&u)
        .map(|(a, b)| {
            loss += (a - b) * (a - b);
            2.0 * (a - b)
        })
        .collect();
    let grad = f.net.backward(&tape, &g)?;
    Ok(LossGrad { loss, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutput {
    pub x1: Vec<f64>,
    /// States at `t = k / steps` for `k = 0..=steps` when requested.
    pub trajectory: Vec<Vec<f64>>,
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

/// Fixed-step integration from `t = 0` to `t = 1`.
pub fn integrate_flow<V: VelocityField + ?Sized>(field: &V, x0: &[f64], steps: usize, method: FlowMethod, keep_trajectory: bool) -> Result<FlowOutput> {
    if steps < 1 {
        return Err(Error::param("flow integration needs at least one step"));
    }
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    let mut trajectory = Vec::new();
    if keep_trajectory {
        trajectory.push(x.clone());
    }
    for k in 0..steps {
        let t = k as f64 * h;
        x = match method {
            FlowMethod::Euler => axpy(&x, h, &field.velocity(t, &x)?),
            FlowMethod::Rk4 => {
                let k1 = field.velocity(t, &x)?;
                let k2 = field.velocity(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1))?;
                let k3 = field.velocity(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2))?;
                let k4 = field.velocity(t + h, &axpy(&x, h, &k3))?;
                x.iter()
                    .enumerate()
                    .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        if keep_trajectory {
            trajectory.push(x.clone());
        }
    }
    Ok(FlowOutput { x1: x, trajectory })
}
