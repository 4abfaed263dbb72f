//! The small differentiable function approximator used as noise predictor
//! and velocity field, with explicit backpropagation.

mod adam;
mod embed;
mod frame;
mod mlp;
mod norm;

pub use adam::{Adam, AdamConfig, AdamState};
pub use embed::{sinusoidal_embedding, time_embedding};
pub use frame::{FrameNet, FrameNetConfig, Reduction};
pub use mlp::{DenoiserNet, NetConfig, NetInput, Tape};
pub use norm::{ea_layernorm, ExpertNormParams, LN_EPS};

/// `silu(x) = x * sigmoid(x)`.
#[inline]
pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}
