use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::sinusoidal_embedding;
use super::norm::standardize;
use super::{silu, silu_grad};
use crate::error::{Error, Result};
use crate::tensor::ModalityTensor;

/// Architecture of a [`DenoiserNet`].
///
/// The network reads `concat(x, time_embedding(time), cond)`, runs it through
/// `hidden.len()` affine layers each followed by optional expert-adaptive
/// layer norm and SiLU, and ends in an affine read-out of width
/// `data_dim` (plus one gate unit when `gated_skip` is set). With the gate the
/// output is `head[..d] + head[d] * x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub data_dim: usize,
    pub cond_dim: usize,
    pub time_embed_dim: usize,
    pub hidden: Vec<usize>,
    /// Number of expert norm parameter sets per hidden layer; 0 disables EA-LN.
    pub experts: usize,
    pub gated_skip: bool,
}

impl NetConfig {
    pub fn new(data_dim: usize, cond_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            data_dim,
            cond_dim,
            time_embed_dim: 16,
            hidden,
            experts: 1,
            gated_skip: true,
        }
    }

    pub fn input_width(&self) -> usize {
        self.data_dim + self.time_embed_dim + self.cond_dim
    }

    pub fn head_width(&self) -> usize {
        self.data_dim + usize::from(self.gated_skip)
    }

    fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::param("data_dim must be positive"));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(Error::param("time_embed_dim must be even and positive"));
        }
        if self.hidden.iter().any(|&h| h < 2) {
            return Err(Error::param("hidden widths must be at least 2"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, read-out last.
    fn affine_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_width();
        for &h in &self.hidden {
            shapes.push((fan_in, h));
            fan_in = h;
        }
        shapes.push((fan_in, self.head_width()));
        shapes
    }

    pub fn param_count(&self) -> usize {
        let affine: usize = self.affine_shapes().iter().map(|(i, o)| i * o + o).sum();
        let norms: usize = self.hidden.iter().map(|h| 2 * h * self.experts).sum();
        affine + norms
    }
}

#[derive(Debug, Clone, Copy)]
struct AffineSlot {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl AffineSlot {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let b = self.offset + self.fan_in * self.fan_out;
        b..b + self.fan_out
    }
}

/// One forward evaluation's inputs.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub x: &'a [f64],
    /// Time position fed to the sinusoidal embedding (a diffusion step index,
    /// or a scaled flow time).
    pub time: f64,
    pub cond: Option<&'a [f64]>,
    pub expert: usize,
}

impl<'a> NetInput<'a> {
    pub fn new(x: &'a [f64], time: f64, cond: Option<&'a [f64]>) -> Self {
        Self {
            x,
            time,
            cond,
            expert: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct HiddenRecord {
    /// Input to the affine map.
    input: Vec<f64>,
    /// Argument of the nonlinearity.
    pre_act: Vec<f64>,
    /// Standardized pre-norm activations (empty without EA-LN).
    standardized: Vec<f64>,
    inv_sigma: f64,
}

/// Activations retained by [`DenoiserNet::forward_with_tape`] for a later
/// [`DenoiserNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    version: Option<u64>,
    hidden: Vec<HiddenRecord>,
    head_input: Vec<f64>,
    head: Vec<f64>,
    x: Vec<f64>,
    expert: usize,
}

/// Multi-layer perceptron with a flat parameter vector.
///
/// Canonical parameter order: for every affine layer (hidden layers first,
/// read-out last) the weights row-major as `[fan_out][fan_in]`, then the bias;
/// after all affine layers, for each hidden layer and each expert, `gamma`
/// then `beta`.
#[derive(Debug, Clone)]
pub struct DenoiserNet {
    config: NetConfig,
    params: Vec<f64>,
    affine: Vec<AffineSlot>,
    norm_offset: usize,
    version: u64,
}

impl DenoiserNet {
    /// Xavier-uniform weights, zero biases, unit gammas and zero betas.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in net.affine.clone() {
            let a = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for w in &mut net.params[slot.weights()] {
                *w = rng.random_range(-a..=a);
            }
        }
        for (layer, &h) in net.config.hidden.iter().enumerate() {
            for e in 0..net.config.experts {
                let g = net.gamma_range(layer, e, h);
                net.params[g].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Ok(net)
    }

    /// Every parameter zero, so the output is identically zero.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut affine = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in config.affine_shapes() {
            affine.push(AffineSlot {
                offset,
                fan_in,
                fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        let params = vec![0.0; config.param_count()];
        Ok(Self {
            config,
            params,
            affine,
            norm_offset: offset,
            version: 0,
        })
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.set_params(params)?;
        Ok(net)
    }

    fn gamma_range(&self, layer: usize, expert: usize, width: usize) -> std::ops::Range<usize> {
        let before: usize = self.config.hidden[..layer]
            .iter()
            .map(|h| 2 * h * self.config.experts)
            .sum();
        let start = self.norm_offset + before + expert * 2 * width;
        start..start + width
    }

    fn beta_range(&self, layer: usize, expert: usize, width: usize) -> std::ops::Range<usize> {
        let g = self.gamma_range(layer, expert, width);
        g.end..g.end + width
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim("parameter vector", self.params.len(), params.len()));
        }
        self.params = params;
        self.version += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_conditional(&self) -> bool {
        self.config.cond_dim > 0
    }

    /// The null condition used for unconditional evaluation of a conditional
    /// network.
    pub fn null_cond(&self) -> Vec<f64> {
        vec![0.0; self.config.cond_dim]
    }

    fn check_input(&self, input: &NetInput) -> Result<()> {
        let cfg = &self.config;
        if input.x.len() != cfg.data_dim {
            return Err(Error::dim("network input", cfg.data_dim, input.x.len()));
        }
        match (cfg.cond_dim, input.cond) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::Configuration(
                    "condition passed to an unconditional network".into(),
                ))
            }
            (_, None) => {
                return Err(Error::Configuration(
                    "conditional network evaluated without a condition".into(),
                ))
            }
            (d, Some(c)) if c.len() != d => return Err(Error::dim("condition", d, c.len())),
            _ => {}
        }
        if cfg.experts > 0 && input.expert >= cfg.experts {
            return Err(Error::param(format!(
                "expert {} out of range (net has {})",
                input.expert, cfg.experts
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: NetInput) -> Result<Vec<f64>> {
        self.run(input, None)
    }

    pub fn forward_with_tape(&self, input: NetInput) -> Result<(Vec<f64>, Tape)> {
        let mut tape = Tape::default();
        let out = self.run(input, Some(&mut tape))?;
        Ok((out, tape))
    }

    /// Convenience wrapper over a tensor: output has the tensor's shape.
    pub fn forward_tensor(&self, x: &ModalityTensor, time: f64, cond: Option<&[f64]>) -> Result<ModalityTensor> {
        let xs = x.to_f64();
        let out = self.forward(NetInput::new(&xs, time, cond))?;
        x.like_from_f64(&out)
    }

    fn run(&self, input: NetInput, mut tape: Option<&mut Tape>) -> Result<Vec<f64>> {
        self.check_input(&input)?;
        let cfg = &self.config;
        let mut z = Vec::with_capacity(cfg.input_width());
        z.extend_from_slice(input.x);
        z.extend(sinusoidal_embedding(input.time, cfg.time_embed_dim));
        if let Some(c) = input.cond {
            z.extend_from_slice(c);
        }

        for (layer, slot) in self.affine[..cfg.hidden.len()].iter().enumerate() {
            let mut a = self.affine_apply(slot, &z);
            let (standardized, inv_sigma) = if cfg.experts > 0 {
                let (s, inv) = standardize(&a);
                let g = &self.params[self.gamma_range(layer, input.expert, slot.fan_out)];
                let b = &self.params[self.beta_range(layer, input.expert, slot.fan_out)];
                for i in 0..a.len() {
                    a[i] = g[i] * s[i] + b[i];
                }
                (s, inv)
            } else {
                (Vec::new(), 0.0)
            };
            let h: Vec<f64> = a.iter().map(|&v| silu(v)).collect();
            if let Some(t) = tape.as_deref_mut() {
                t.hidden.push(HiddenRecord {
                    input: std::mem::take(&mut z),
                    pre_act: a,
                    standardized,
                    inv_sigma,
                });
            }
            z = h;
        }

        let head_slot = self.affine[cfg.hidden.len()];
        let head = self.affine_apply(&head_slot, &z);
        let d = cfg.data_dim;
        let out = if cfg.gated_skip {
            let gate = head[d];
            (0..d).map(|i| head[i] + gate * input.x[i]).collect()
        } else {
            head.clone()
        };
        if let Some(t) = tape {
            t.version = Some(self.version);
            t.head_input = z;
            t.head = head;
            t.x = input.x.to_vec();
            t.expert = input.expert;
        }
        Ok(out)
    }

    fn affine_apply(&self, slot: &AffineSlot, z: &[f64]) -> Vec<f64> {
        let w = &self.params[slot.weights()];
        let b = &self.params[slot.bias()];
        (0..slot.fan_out)
            .map(|o| {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + b[o]
            })
            .collect()
    }

    /// Gradient of a scalar loss with respect to the parameters, given the
    /// loss gradient at the network output.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(tape, grad_out, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grad`.
    pub fn backward_into(&self, tape: &Tape, grad_out: &[f64], grad: &mut [f64]) -> Result<()> {
        match tape.version {
            None => return Err(Error::State("backward called without a recorded forward pass".into())),
            Some(v) if v != self.version || tape.hidden.len() != self.config.hidden.len() => {
                return Err(Error::State(
                    "tape was recorded against different parameters".into(),
                ))
            }
            _ => {}
        }
        let cfg = &self.config;
        let d = cfg.data_dim;
        if grad_out.len() != d {
            return Err(Error::dim("output gradient", d, grad_out.len()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::dim("gradient buffer", self.params.len(), grad.len()));
        }

        let mut d_head = grad_out.to_vec();
        if cfg.gated_skip {
            d_head.push(grad_out.iter().zip(&tape.x).map(|(g, x)| g * x).sum());
        }
        let head_slot = self.affine[cfg.hidden.len()];
        let mut dz = self.affine_backward(&head_slot, &tape.head_input, &d_head, grad, true);

        for layer in (0..cfg.hidden.len()).rev() {
            let rec = &tape.hidden[layer];
            let slot = self.affine[layer];
            let mut du: Vec<f64> = dz
                .iter()
                .zip(&rec.pre_act)
                .map(|(g, &u)| g * silu_grad(u))
                .collect();
            if cfg.experts > 0 {
                let gr = self.gamma_range(layer, tape.expert, slot.fan_out);
                let br = self.beta_range(layer, tape.expert, slot.fan_out);
                let n = du.len() as f64;
                let mut ds = vec![0.0; du.len()];
                for i in 0..du.len() {
                    grad[gr.start + i] += du[i] * rec.standardized[i];
                    grad[br.start + i] += du[i];
                    ds[i] = du[i] * self.params[gr.start + i];
                }
                let mean_ds = ds.iter().sum::<f64>() / n;
                let mean_ds_s = ds
                    .iter()
                    .zip(&rec.standardized)
                    .map(|(a, s)| a * s)
                    .sum::<f64>()
                    / n;
                for i in 0..du.len() {
                    du[i] = rec.inv_sigma * (ds[i] - mean_ds - rec.standardized[i] * mean_ds_s);
                }
            }
            dz = self.affine_backward(&slot, &rec.input, &du, grad, layer > 0);
        }
        Ok(())
    }

    /// Accumulates weight and bias gradients; returns the input gradient when
    /// `need_input` is set.
    fn affine_backward(&self, slot: &AffineSlot, input: &[f64], d_out: &[f64], grad: &mut [f64], need_input: bool) -> Vec<f64> {
        let wr = slot.weights();
        let br = slot.bias();
        let w = &self.params[wr.clone()];
        let mut dz = if need_input { vec![0.0; slot.fan_in] } else { Vec::new() };
        for o in 0..slot.fan_out {
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            grad[br.start + o] += g;
            let gw = &mut grad[wr.start + o * slot.fan_in..wr.start + (o + 1) * slot.fan_in];
            for (gwi, zi) in gw.iter_mut().zip(input) {
                *gwi += g * zi;
            }
            if need_input {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                for (dzi, wi) in dz.iter_mut().zip(row) {
                    *dzi += g * wi;
                }
            }
        }
        dz
    }
}
